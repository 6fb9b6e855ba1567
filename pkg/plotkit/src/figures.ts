/**
 * The seven figure kinds rendered from sweep CSV output. Conventions
 * follow the study plots: conditional quantities dashed, unconditional
 * solid, log axes for rates and phonon numbers, grey band marking the
 * squeezing region (variance below 1/2), filled circles on curve minima.
 */

import { writeFileSync } from "node:fs";

import { okRows, readTable, requireColumns, type Row, type Table, CsvError } from "./csv.js";
import { compose, Figure, PALETTE, type Provenance, type SeriesStyle } from "./svg.js";

export const VERSION = "0.1.0";

export type FigureKind =
  | "phonon-vs-coupling"
  | "phonon-vs-frequency"
  | "variance-vs-theta"
  | "variance-vs-frequency"
  | "ellipse-pair"
  | "feedback-strength"
  | "squeezing-contour";

export const FIGURE_KINDS: FigureKind[] = [
  "phonon-vs-coupling",
  "phonon-vs-frequency",
  "variance-vs-theta",
  "variance-vs-frequency",
  "ellipse-pair",
  "feedback-strength",
  "squeezing-contour",
];

export interface FigureRecipe {
  kind: FigureKind;
  inputs: string[];
  out: string;
  /** Visual scale factor for the conditional ellipse. */
  scaleConditional?: number;
  /** Probe amplitude normalizing the feedback-strength axis. */
  epsProbe?: number;
  /** Phonon number normalizing the feedback-strength y axis. */
  nInf?: number;
  /** Contour levels for the squeezing contour. */
  levels?: number[];
}

interface SeriesKey {
  label: string;
  rows: Row[];
}

function groupBy(rows: Row[], columns: string[]): SeriesKey[] {
  const groups = new Map<string, Row[]>();
  for (const row of rows) {
    const key = columns.map((c) => String(row[c])).join(", ");
    const bucket = groups.get(key) ?? [];
    bucket.push(row);
    groups.set(key, bucket);
  }
  return [...groups.entries()].map(([label, rows]) => ({ label, rows }));
}

function varyingColumns(rows: Row[], candidates: string[]): string[] {
  return candidates.filter(
    (c) => new Set(rows.map((r) => String(r[c]))).size > 1,
  );
}

function sortedBy(rows: Row[], column: string): Row[] {
  return [...rows].sort((a, b) => (a[column] as number) - (b[column] as number));
}

function bounds(values: number[], log: boolean): [number, number] {
  const finite = values.filter((v) => isFinite(v) && (!log || v > 0));
  if (finite.length === 0) throw new CsvError("no finite values to plot");
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (log) {
    return [lo / 1.3, hi * 1.3];
  }
  const pad = (hi - lo || Math.abs(hi) || 1) * 0.08;
  return [lo - pad, hi + pad];
}

function provenance(kind: string, tables: Table[]): Provenance {
  return {
    tool: "plotkit",
    version: VERSION,
    kind,
    inputs: tables.map((t) => ({ path: t.path, sha256: t.sha256 })),
    schemaVersion: tables[0]?.schemaVersion ?? 0,
  };
}

function curveFamily(
  table: Table,
  xColumn: string,
  xLabel: string,
  yLabel: string,
  yPairs: { column: string; dashed: boolean; tag: string }[],
  logY: boolean,
  band: boolean,
): Figure {
  requireColumns(table, [xColumn, ...yPairs.map((p) => p.column)]);
  const rows = okRows(table);
  if (rows.length === 0) throw new CsvError(`${table.path}: every row failed`);
  const groups = groupBy(rows, varyingColumns(rows, ["model", "omega_m", "eta"]));
  const xs = rows.map((r) => r[xColumn] as number);
  const ys = rows.flatMap((r) => yPairs.map((p) => r[p.column] as number));
  const logX = xColumn !== "theta";
  const fig = new Figure(
    { label: xLabel, scale: logX ? "log" : "linear", ...rangeOf(xs, logX) },
    { label: yLabel, scale: logY ? "log" : "linear", ...rangeOf(ys, logY) },
  );
  if (band) fig.band(0.5);
  groups.forEach((group, gi) => {
    const color = PALETTE[gi % PALETTE.length];
    const ordered = sortedBy(group.rows, xColumn);
    const gx = ordered.map((r) => r[xColumn] as number);
    for (const pair of yPairs) {
      const gy = ordered.map((r) => r[pair.column] as number);
      const style: SeriesStyle = { color, dashed: pair.dashed };
      const label = group.label ? `${group.label} (${pair.tag})` : pair.tag;
      fig.polyline(gx, gy, style, label);
      // filled circle on the curve minimum
      let best = 0;
      gy.forEach((v, i) => {
        if (isFinite(v) && v < gy[best]) best = i;
      });
      if (isFinite(gy[best])) fig.marker(gx[best], gy[best], color);
    }
  });
  return fig;
}

/** Optimal-angle panel accompanying the phonon curves, when present. */
function anglePanel(table: Table, xColumn: string, xLabel: string,
                    minColumn: string): Figure | null {
  if (!table.columns.includes("theta_opt")) return null;
  const rows = okRows(table).filter((r) => isFinite(r.theta_opt as number));
  if (rows.length < 2) return null;
  const xs = rows.map((r) => r[xColumn] as number);
  const fig = new Figure(
    { label: xLabel, scale: "log", ...rangeOf(xs, true) },
    { label: "optimal measurement angle (rad)", scale: "linear",
      min: -0.08, max: Math.PI / 2 + 0.08 },
  );
  const groups = groupBy(rows, varyingColumns(rows, ["model", "omega_m", "eta"]));
  groups.forEach((group, gi) => {
    const color = PALETTE[gi % PALETTE.length];
    const ordered = sortedBy(group.rows, xColumn);
    const gx = ordered.map((r) => r[xColumn] as number);
    const gy = ordered.map((r) => r.theta_opt as number);
    fig.polyline(gx, gy, { color }, group.label);
    const ns = ordered.map((r) => r[minColumn] as number);
    let best = 0;
    ns.forEach((v, i) => {
      if (isFinite(v) && v < ns[best]) best = i;
    });
    if (isFinite(gy[best])) fig.marker(gx[best], gy[best], color);
  });
  return fig;
}

function rangeOf(values: number[], log: boolean): { min: number; max: number } {
  const [min, max] = bounds(values, log);
  return { min, max };
}

function renderPhonon(table: Table, xColumn: string, xLabel: string): string {
  const main = curveFamily(
    table,
    xColumn,
    xLabel,
    "phonon number n",
    [
      { column: "n_unconditional", dashed: false, tag: "uncond." },
      { column: "n_conditional", dashed: true, tag: "cond." },
    ],
    true,
    false,
  );
  const angles = anglePanel(table, xColumn, xLabel, "n_unconditional");
  const fragments = [main.fragment()];
  if (angles) fragments.push(angles.fragment());
  return compose(fragments, provenance(xColumn, [table]));
}

function renderVariance(table: Table, xColumn: string, xLabel: string,
                        logY: boolean): string {
  const fig = curveFamily(
    table,
    xColumn,
    xLabel,
    "minimum variance",
    [
      { column: "vmin_unconditional", dashed: false, tag: "uncond." },
      { column: "vmin_conditional", dashed: true, tag: "cond." },
    ],
    logY,
    true,
  );
  return fig.render(provenance(xColumn, [table]));
}

function renderEllipsePair(table: Table, recipe: FigureRecipe): string {
  requireColumns(table, [
    "n_conditional", "vmin_conditional", "angle_conditional",
    "n_unconditional", "vmin_unconditional", "angle_unconditional",
  ]);
  const row = okRows(table)[0];
  if (!row) throw new CsvError(`${table.path}: every row failed`);
  const scale = recipe.scaleConditional ?? 1;
  const axes = (n: number, vmin: number) => {
    const vmax = 2 * (n as number) + 1 - (vmin as number);
    return [Math.sqrt(vmin), Math.sqrt(vmax)];
  };
  const [cMin, cMax] = axes(row.n_conditional as number,
                            row.vmin_conditional as number);
  const [uMin, uMax] = axes(row.n_unconditional as number,
                            row.vmin_unconditional as number);
  const reach = Math.max(uMax, cMax * Math.sqrt(scale)) * 1.15;
  const fig = new Figure(
    { label: "position quadrature Q", scale: "linear", min: -reach, max: reach },
    { label: "momentum quadrature P", scale: "linear", min: -reach, max: reach },
  );
  fig.ellipse(0, 0, uMin, uMax, row.angle_unconditional as number,
              { color: PALETTE[0] }, "unconditional");
  const s = Math.sqrt(scale);
  fig.ellipse(0, 0, cMin * s, cMax * s, row.angle_conditional as number,
              { color: PALETTE[1], dashed: true },
              scale === 1 ? "conditional" : `conditional (x${scale} area)`);
  return fig.render(provenance("ellipse-pair", [table]));
}

function renderFeedbackStrength(table: Table, recipe: FigureRecipe): string {
  requireColumns(table, ["sigma_fb", "n_unconditional"]);
  const rows = sortedBy(okRows(table), "sigma_fb");
  if (rows.length === 0) throw new CsvError(`${table.path}: every row failed`);
  const eps = recipe.epsProbe ?? 1;
  const ns = rows.map((r) => r.n_unconditional as number);
  const nInf = recipe.nInf ?? Math.min(...ns);
  const xs = rows.map((r) => (r.sigma_fb as number) / eps);
  const ys = ns.map((n) => n / nInf);
  const fig = new Figure(
    {
      label: eps === 1 ? "feedback strength" : "feedback strength / probe amplitude",
      scale: "log", ...rangeOf(xs, true),
    },
    { label: "n / n_inf", scale: "linear", ...rangeOf([...ys, 1], false) },
  );
  fig.hline(1.0);
  fig.polyline(xs, ys, { color: PALETTE[0] }, "unconditional");
  return fig.render(provenance("feedback-strength", [table]));
}

interface Grid {
  xs: number[];
  ys: number[];
  z: number[][]; // z[iy][ix]
}

function gridFromRows(rows: Row[], xc: string, yc: string, zc: string): Grid {
  const xs = [...new Set(rows.map((r) => r[xc] as number))].sort((a, b) => a - b);
  const ys = [...new Set(rows.map((r) => r[yc] as number))].sort((a, b) => a - b);
  const z = ys.map(() => xs.map(() => NaN));
  for (const row of rows) {
    const ix = xs.indexOf(row[xc] as number);
    const iy = ys.indexOf(row[yc] as number);
    z[iy][ix] = row[zc] as number;
  }
  if (xs.length < 2 || ys.length < 2) {
    throw new CsvError("contour needs at least a 2x2 grid");
  }
  return { xs, ys, z };
}

/** Marching-squares segments for one level, linear interpolation. */
function contourSegments(grid: Grid, level: number): [number, number][][] {
  const segs: [number, number][][] = [];
  const { xs, ys, z } = grid;
  const lerp = (a: number, b: number, va: number, vb: number) =>
    a + ((level - va) / (vb - va)) * (b - a);
  for (let iy = 0; iy < ys.length - 1; iy++) {
    for (let ix = 0; ix < xs.length - 1; ix++) {
      const v = [z[iy][ix], z[iy][ix + 1], z[iy + 1][ix + 1], z[iy + 1][ix]];
      if (v.some((x) => !isFinite(x))) continue;
      const corner = [
        [xs[ix], ys[iy]], [xs[ix + 1], ys[iy]],
        [xs[ix + 1], ys[iy + 1]], [xs[ix], ys[iy + 1]],
      ];
      const pts: [number, number][] = [];
      for (let e = 0; e < 4; e++) {
        const a = e;
        const b = (e + 1) % 4;
        const above = (v[a] >= level) !== (v[b] >= level);
        if (above) {
          pts.push([
            lerp(corner[a][0], corner[b][0], v[a], v[b]),
            lerp(corner[a][1], corner[b][1], v[a], v[b]),
          ]);
        }
      }
      for (let i = 0; i + 1 < pts.length; i += 2) {
        segs.push([pts[i], pts[i + 1]]);
      }
    }
  }
  return segs;
}

function renderSqueezingContour(table: Table, recipe: FigureRecipe): string {
  requireColumns(table, ["omega_m", "g", "vmin_conditional"]);
  const rows = okRows(table);
  if (rows.length === 0) throw new CsvError(`${table.path}: every row failed`);
  const grid = gridFromRows(rows, "omega_m", "g", "vmin_conditional");
  const levels = recipe.levels ?? [0.5, 0.61, 0.8, 1.0, 2.0];
  const fig = new Figure(
    { label: "mechanical frequency (rad/s)", scale: "log",
      min: grid.xs[0], max: grid.xs[grid.xs.length - 1] },
    { label: "coupling g (rad/s)", scale: "log",
      min: grid.ys[0], max: grid.ys[grid.ys.length - 1] },
  );
  levels.forEach((level, i) => {
    const color = level === 0.5 ? "#111" : PALETTE[i % PALETTE.length];
    for (const [[x1, y1], [x2, y2]] of contourSegments(grid, level)) {
      fig.polyline([x1, x2], [y1, y2],
                   { color, width: level === 0.5 ? 2.4 : 1.4 });
    }
    // label the level near its first segment
    const segs = contourSegments(grid, level);
    if (segs.length > 0) {
      fig.text(segs[0][0][0], segs[0][0][1], String(level), color);
    }
  });
  return fig.render(provenance("squeezing-contour", [table]));
}

export function renderFigure(recipe: FigureRecipe): string {
  if (recipe.inputs.length === 0) {
    throw new CsvError("no input files given");
  }
  const table = readTable(recipe.inputs[0]);
  let svg: string;
  switch (recipe.kind) {
    case "phonon-vs-coupling":
      svg = renderPhonon(table, "g", "coupling g (rad/s)");
      break;
    case "phonon-vs-frequency":
      svg = renderPhonon(table, "omega_m", "mechanical frequency (rad/s)");
      break;
    case "variance-vs-theta":
      svg = renderVariance(table, "theta", "measurement angle (rad)", false);
      break;
    case "variance-vs-frequency":
      svg = renderVariance(table, "omega_m", "mechanical frequency (rad/s)",
                           true);
      break;
    case "ellipse-pair":
      svg = renderEllipsePair(table, recipe);
      break;
    case "feedback-strength":
      svg = renderFeedbackStrength(table, recipe);
      break;
    case "squeezing-contour":
      svg = renderSqueezingContour(table, recipe);
      break;
    default:
      throw new CsvError(`unknown figure kind '${recipe.kind}'`);
  }
  writeFileSync(recipe.out, svg);
  return svg;
}
