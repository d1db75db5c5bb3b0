import { loadSpec } from "./spec";
import { renderToFile } from "./plot";

function usage(): void {
  console.error("usage: plot --spec <spec.json>");
}

export function main(argv: string[]): number {
  const idx = argv.indexOf("--spec");
  if (argv[0] !== "plot" || idx === -1 || !argv[idx + 1]) {
    usage();
    return 2;
  }
  try {
    const spec = loadSpec(argv[idx + 1]);
    const result = renderToFile(spec);
    console.log(result.output);
    if (result.overlayViolations.length > 0) {
      for (const v of result.overlayViolations) {
        console.error(
          `certificate below empirical curve at epoch ${v.epoch}: ${v.bound} < ${v.empirical}`,
        );
      }
      return 1;
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
