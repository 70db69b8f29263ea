/** CLI: render figure panels from metrics.csv; optional golden smoke check. */

import { renderFigures, smokeCheck, writeGolden, KNOWN_AXES } from "./figures.js";

interface Args {
  csv?: string;
  axis?: string;
  out?: string;
  format: string;
  golden?: string;
  writeGolden: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { format: "svg", writeGolden: false };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    switch (flag) {
      case "--csv":
        args.csv = argv[++i];
        break;
      case "--axis":
        args.axis = argv[++i];
        break;
      case "--out":
        args.out = argv[++i];
        break;
      case "--format":
        args.format = argv[++i];
        break;
      case "--golden":
        args.golden = argv[++i];
        break;
      case "--write-golden":
        args.writeGolden = true;
        break;
      case "--help":
        usage();
        process.exit(0);
        break;
      default:
        throw new Error(`unknown flag '${flag}'`);
    }
  }
  return args;
}

function usage(): void {
  console.log(
    [
      "usage: node dist/cli.js --csv metrics.csv [--axis devices|sampling|thresholds]",
      "                        [--out DIR] [--format svg]",
      "                        [--golden DIR] [--write-golden]",
      "",
      "Renders one panel per (sweep value, solution): a point-error box plot per",
      "checkpoint plus region-accuracy and reliability curves. With --golden the",
      "recomputed summary statistics are checked against DIR/summaries.json;",
      "--write-golden regenerates that file instead.",
    ].join("\n"),
  );
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    usage();
    return 2;
  }
  if (!args.csv) {
    console.error("error: --csv is required");
    usage();
    return 2;
  }
  try {
    if (args.writeGolden) {
      if (!args.golden) {
        throw new Error("--write-golden needs --golden DIR");
      }
      const file = writeGolden(args.csv, args.golden);
      console.log(`wrote ${file}`);
      return 0;
    }
    if (args.out) {
      const axes = args.axis ? [args.axis] : KNOWN_AXES;
      for (const axis of axes) {
        const files = renderFigures({
          csvPath: args.csv,
          axis,
          outDir: args.out,
          format: args.format,
        });
        console.log(`${axis}: wrote ${files.length} panels`);
      }
    }
    if (args.golden) {
      const failures = smokeCheck(args.csv, args.golden);
      if (failures.length > 0) {
        for (const f of failures) {
          console.error(`smoke-check mismatch in ${f.figure}: ${f.detail}`);
        }
        return 1;
      }
      console.log("smoke check passed");
    }
    if (!args.out && !args.golden) {
      console.error("error: nothing to do (need --out and/or --golden)");
      return 2;
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

main(process.argv.slice(2));
