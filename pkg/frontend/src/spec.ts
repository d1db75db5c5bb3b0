import * as fs from "node:fs";
import * as path from "node:path";

import { DEFAULT_GROUP_BY } from "./series";

/** Declarative figure description, loaded from JSON. */
export interface PlotSpec {
  /** aggregate CSV written by the runner */
  input: string;
  /** metric column prefix: train_loss, grad_norm_sq, test_accuracy, dist_sq */
  metric: string;
  groupBy: string[];
  logY: boolean;
  /** first epoch to display; accuracy curves default to 2 */
  startEpoch: number;
  /** optional certificate-curve CSV (epoch,total,...,target) to overlay */
  overlay?: string;
  output: string;
  title?: string;
  width: number;
  height: number;
}

const METRICS = ["train_loss", "grad_norm_sq", "test_accuracy", "dist_sq"];

export function normalizeSpec(raw: Record<string, unknown>, baseDir = "."): PlotSpec {
  for (const key of ["input", "metric", "output"]) {
    if (typeof raw[key] !== "string" || raw[key] === "") {
      throw new Error(`plot spec needs a string ${key}`);
    }
  }
  const metric = raw.metric as string;
  if (!METRICS.includes(metric)) {
    throw new Error(`unknown metric ${metric}; expected one of ${METRICS.join(", ")}`);
  }
  const resolve = (p: string) => (path.isAbsolute(p) ? p : path.join(baseDir, p));
  return {
    input: resolve(raw.input as string),
    metric,
    groupBy: (raw.groupBy as string[] | undefined) ?? DEFAULT_GROUP_BY,
    logY: (raw.logY as boolean | undefined) ?? metric !== "test_accuracy",
    startEpoch:
      (raw.startEpoch as number | undefined) ?? (metric === "test_accuracy" ? 2 : 1),
    overlay: raw.overlay ? resolve(raw.overlay as string) : undefined,
    output: resolve(raw.output as string),
    title: raw.title as string | undefined,
    width: (raw.width as number | undefined) ?? 720,
    height: (raw.height as number | undefined) ?? 480,
  };
}

export function loadSpec(specPath: string): PlotSpec {
  const raw = JSON.parse(fs.readFileSync(specPath, "utf-8"));
  return normalizeSpec(raw, path.dirname(specPath));
}
