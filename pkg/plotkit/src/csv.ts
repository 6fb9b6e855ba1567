/**
 * Reader for the versioned sweep CSV schema: a '#'-prefixed header block
 * carrying the schema version and the full run config, one header row,
 * then 17-significant-digit numeric cells (plus a few string and 0/1
 * boolean columns).
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export type Cell = number | boolean | string;
export type Row = Record<string, Cell>;

export interface Table {
  path: string;
  schemaVersion: number;
  meta: Record<string, unknown>;
  columns: string[];
  rows: Row[];
  /** sha256 of the raw file bytes, for provenance embedding. */
  sha256: string;
}

const STRING_COLUMNS = new Set(["model", "cost_kind", "notes", "error"]);
const BOOL_COLUMNS = new Set([
  "physical_conditional",
  "physical_unconditional",
  "stabilizing",
  "degenerate_correlation",
]);

export class CsvError extends Error {}

export class MissingColumnError extends CsvError {
  constructor(readonly column: string, path: string) {
    super(`column '${column}' not present in ${path}`);
  }
}

function parseCell(column: string, cell: string): Cell {
  if (STRING_COLUMNS.has(column)) return cell;
  if (BOOL_COLUMNS.has(column)) return cell === "1";
  const value = Number(cell);
  if (Number.isNaN(value) && cell !== "nan" && cell.trim() !== "nan") {
    // Number("nan") is NaN already; anything else non-numeric is corrupt
    if (!/^[+-]?nan$/i.test(cell.trim())) {
      throw new CsvError(`cell '${cell}' in column '${column}' is not numeric`);
    }
  }
  return value;
}

export function readTable(path: string): Table {
  const raw = readFileSync(path);
  const sha256 = createHash("sha256").update(raw).digest("hex");
  const text = raw.toString("utf8");
  let schemaVersion = 0;
  let meta: Record<string, unknown> = {};
  let columns: string[] | null = null;
  const rows: Row[] = [];
  for (const line of text.split("\n")) {
    if (!line) continue;
    if (line.startsWith("#")) {
      const body = line.slice(1).trim();
      if (body.startsWith("optolqg-schema:")) {
        schemaVersion = Number(body.split(":", 2)[1]);
      } else if (body.startsWith("config:")) {
        meta = JSON.parse(body.slice("config:".length));
      }
      continue;
    }
    const cells = line.split(",");
    if (columns === null) {
      columns = cells;
      continue;
    }
    const row: Row = {};
    columns.forEach((col, i) => {
      row[col] = parseCell(col, cells[i] ?? "");
    });
    rows.push(row);
  }
  if (columns === null) {
    throw new CsvError(`${path} has no header row`);
  }
  if (rows.length === 0) {
    throw new CsvError(`${path} has no rows`);
  }
  return { path, schemaVersion, meta, columns, rows, sha256 };
}

export function requireColumns(table: Table, needed: string[]): void {
  for (const column of needed) {
    if (!table.columns.includes(column)) {
      throw new MissingColumnError(column, table.path);
    }
  }
}

export function numbers(table: Table, column: string): number[] {
  requireColumns(table, [column]);
  return table.rows.map((r) => r[column] as number);
}

/** Rows that completed without a solver error. */
export function okRows(table: Table): Row[] {
  return table.rows.filter((r) => !(r.error as string));
}
