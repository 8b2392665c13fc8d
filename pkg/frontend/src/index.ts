import * as fs from "fs";

import { loadSweepCsv } from "./csv";
import { FigureKind, FigureRecipe, figureData } from "./recipe";
import { renderFigureSvg } from "./render";

export { MissingColumn, EmptyFilter, parseSweepCsv, loadSweepCsv } from "./csv";
export { FigureKind, FigureRecipe, FIGURE_KINDS, figureData, kneeOf } from "./recipe";
export { renderFigureSvg, logFloor } from "./render";

/** Render one recipe to its output SVG file and return the path. */
export function render(recipe: FigureRecipe): string {
  const rows = loadSweepCsv(recipe.csvPath);
  const data = figureData(recipe.figure, rows);
  const svg = renderFigureSvg(data);
  fs.writeFileSync(recipe.outPath, svg);
  return recipe.outPath;
}

export function renderToString(figure: FigureKind, csvPath: string): string {
  return renderFigureSvg(figureData(figure, loadSweepCsv(csvPath)));
}
