#!/usr/bin/env node
/**
 * plotkit <kind> <input.csv> --out figure.svg [options]
 *
 * Kinds: phonon-vs-coupling, phonon-vs-frequency, variance-vs-theta,
 * variance-vs-frequency, ellipse-pair, feedback-strength,
 * squeezing-contour.
 *
 * Options:
 *   --out PATH               output SVG path (required)
 *   --scale-conditional N    area scale for the conditional ellipse
 *   --eps-probe X            probe amplitude normalizing sigma_fb
 *   --n-inf X                phonon number normalizing the y axis
 *   --levels a,b,c           contour levels
 */

import { CsvError, MissingColumnError } from "./csv.js";
import { FIGURE_KINDS, renderFigure, type FigureKind, type FigureRecipe } from "./figures.js";

export function parseArgs(argv: string[]): FigureRecipe {
  const [kind, ...rest] = argv;
  if (!kind || !FIGURE_KINDS.includes(kind as FigureKind)) {
    throw new CsvError(
      `usage: plotkit <kind> <input.csv> --out figure.svg\n` +
      `kinds: ${FIGURE_KINDS.join(", ")}`,
    );
  }
  const recipe: FigureRecipe = { kind: kind as FigureKind, inputs: [], out: "" };
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    const next = () => {
      const v = rest[++i];
      if (v === undefined) throw new CsvError(`${arg} needs a value`);
      return v;
    };
    if (arg === "--out") recipe.out = next();
    else if (arg === "--scale-conditional") recipe.scaleConditional = Number(next());
    else if (arg === "--eps-probe") recipe.epsProbe = Number(next());
    else if (arg === "--n-inf") recipe.nInf = Number(next());
    else if (arg === "--levels") recipe.levels = next().split(",").map(Number);
    else if (arg.startsWith("--")) throw new CsvError(`unknown option ${arg}`);
    else recipe.inputs.push(arg);
  }
  if (!recipe.out) throw new CsvError("--out is required");
  return recipe;
}

export function main(argv: string[]): number {
  try {
    const recipe = parseArgs(argv);
    renderFigure(recipe);
    console.log(`wrote ${recipe.out}`);
    return 0;
  } catch (err) {
    if (err instanceof MissingColumnError || err instanceof CsvError) {
      console.error(String(err.message));
      return 2;
    }
    throw err;
  }
}

const invokedDirectly = process.argv[1] &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
