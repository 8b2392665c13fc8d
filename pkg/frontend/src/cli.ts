#!/usr/bin/env node
/** figplots --csv results.csv --figure pmd --out pmd.svg */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { FIGURE_KINDS, FigureKind } from "./recipe";
import { render } from "./index";

export function main(argv: string[]): number {
  const args = yargs(argv)
    .option("csv", { type: "string", demandOption: true, describe: "sweep CSV produced by the simulator" })
    .option("figure", {
      type: "string",
      demandOption: true,
      choices: FIGURE_KINDS,
      describe: "figure family to render",
    })
    .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
    .strict()
    .parseSync();

  try {
    const path = render({
      csvPath: args.csv,
      figure: args.figure as FigureKind,
      outPath: args.out,
    });
    console.log(`wrote ${path}`);
    return 0;
  } catch (err) {
    console.error(String(err));
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(hideBin(process.argv)));
}
