#!/usr/bin/env node
/**
 * viz <decay|slopes|morrey|all> <run-dir> [out-dir]
 *
 * Reads the documented CSV artifacts of a run directory and writes SVG
 * figures plus fit-parameter JSON beside them.  The run directory inputs
 * are never modified.
 */

import { MissingArtifact, plotDecay, plotMorrey, plotSlopes } from "./plots.js";

function usage(): never {
  console.error("usage: viz <decay|slopes|morrey|all> <run-dir> [out-dir]");
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv.length < 2) {
    usage();
  }
  const [cmd, runDir, outDir] = argv;
  const jobs: Record<string, Array<(d: string, o?: string) => unknown>> = {
    decay: [plotDecay],
    slopes: [plotSlopes],
    morrey: [plotMorrey],
    all: [plotDecay, plotSlopes, plotMorrey],
  };
  const fns = jobs[cmd];
  if (!fns) {
    usage();
  }
  let code = 0;
  for (const fn of fns) {
    try {
      const res = fn(runDir, outDir) as { svgPath: string };
      console.log(`wrote ${res.svgPath}`);
    } catch (e) {
      if (e instanceof MissingArtifact) {
        console.error(`missing artifact: ${e.message}`);
        code = cmd === "all" ? code : 3;
      } else {
        throw e;
      }
    }
  }
  return code;
}

const isMain = process.argv[1] && import.meta.url.endsWith(
  process.argv[1].split("/").pop() ?? "");
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
