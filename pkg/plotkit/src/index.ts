export { readTable, requireColumns, okRows, CsvError, MissingColumnError } from "./csv.js";
export type { Table, Row, Cell } from "./csv.js";
export { Figure, PALETTE } from "./svg.js";
export type { Provenance, AxisSpec, SeriesStyle } from "./svg.js";
export { renderFigure, FIGURE_KINDS, VERSION } from "./figures.js";
export type { FigureRecipe, FigureKind } from "./figures.js";
