#!/usr/bin/env node
/** plots CLI: `plots boxplot --csv <path> --metric <name> --out <png>` and
 *  `plots rates --csv <path> --out <png>`. */

import { realpathSync } from "node:fs";
import { pathToFileURL } from "node:url";

import { renderBoxplot, METRICS } from "./boxplot.js";
import { renderRatePlot } from "./rateplot.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed flag list near '${key}'`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function need(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) {
    throw new Error(`missing required flag --${name}`);
  }
  return value;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "boxplot") {
      const flags = parseFlags(rest);
      const result = renderBoxplot(need(flags, "csv"), need(flags, "metric"), need(flags, "out"));
      for (const warning of result.warnings) {
        console.warn(`warning: ${warning}`);
      }
      console.log(`wrote ${result.png} (+ ${result.svg}); ${result.cells.length} cells`);
      return 0;
    }
    if (command === "rates") {
      const flags = parseFlags(rest);
      const result = renderRatePlot(need(flags, "csv"), need(flags, "out"));
      if (result.placeholder) {
        console.warn("warning: no positive mean errors; wrote placeholder image");
      }
      console.log(`wrote ${result.png} (+ ${result.svg})`);
      return 0;
    }
    console.error(
      `usage: plots boxplot --csv <path> --metric <${METRICS.join("|")}> --out <png>\n` +
        "       plots rates --csv <path> --out <png>",
    );
    return 1;
  } catch (err) {
    console.error(`plots: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

// invoked directly or through the bin symlink (not when imported by tests)
const entry = process.argv[1];
if (entry && import.meta.url === pathToFileURL(realpathSync(entry)).href) {
  process.exit(main(process.argv.slice(2)));
}
