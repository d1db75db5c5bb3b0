import { Row, Table, num, requireColumns } from "./csv";

/** One plotted group: mean curve plus a +-1 sample-std band. */
export interface Band {
  label: string;
  epochs: number[];
  mean: number[];
  std: number[];
}

export interface Overlay {
  epochs: number[];
  total: number[];
  /** what the certificate bounds: "f_gap", "avg_grad_norm_sq", ... */
  target: string;
}

export const DEFAULT_GROUP_BY = ["strategy", "alpha", "gamma_over_n"];

function groupKey(row: Row, groupBy: string[]): string {
  return groupBy.map((c) => `${c}=${row[c]}`).join(" ");
}

/**
 * Split aggregate rows into per-group series of `<metric>_mean` and
 * `<metric>_std`, ordered by epoch, starting at startEpoch.  Groups whose
 * metric column is entirely empty are dropped; a missing column is an
 * error naming it.
 */
export function groupSeries(
  table: Table,
  metric: string,
  groupBy: string[] = DEFAULT_GROUP_BY,
  startEpoch = 1,
): Band[] {
  const meanCol = `${metric}_mean`;
  const stdCol = `${metric}_std`;
  requireColumns(table, ["epoch", meanCol, stdCol, ...groupBy]);
  const order: string[] = [];
  const byGroup = new Map<string, Row[]>();
  for (const row of table.rows) {
    const key = groupKey(row, groupBy);
    if (!byGroup.has(key)) {
      byGroup.set(key, []);
      order.push(key);
    }
    byGroup.get(key)!.push(row);
  }
  const bands: Band[] = [];
  for (const key of order) {
    const rows = byGroup
      .get(key)!
      .filter((r) => r[meanCol] !== "" && Number(r.epoch) >= startEpoch)
      .sort((a, b) => Number(a.epoch) - Number(b.epoch));
    if (rows.length === 0) {
      continue;
    }
    bands.push({
      label: key,
      epochs: rows.map((r) => Number(r.epoch)),
      mean: rows.map((r) => num(r, meanCol)!),
      std: rows.map((r) => num(r, stdCol) ?? 0),
    });
  }
  return bands;
}

/** Prefix means: out[i] = (v[0] + ... + v[i]) / (i + 1). */
export function runningMean(values: number[]): number[] {
  const out = new Array<number>(values.length);
  let acc = 0;
  for (let i = 0; i < values.length; i++) {
    acc += values[i];
    out[i] = acc / (i + 1);
  }
  return out;
}

export function readOverlay(table: Table): Overlay {
  requireColumns(table, ["epoch", "total", "target"]);
  const rows = [...table.rows].sort((a, b) => Number(a.epoch) - Number(b.epoch));
  return {
    epochs: rows.map((r) => Number(r.epoch)),
    total: rows.map((r) => num(r, "total")!),
    target: rows[0]?.target ?? "",
  };
}
