/** Summary statistics shared with the simulator's metrics component. */

import { MetricsRow } from "./csv.js";

export type BoxStats = [number, number, number, number, number]; // min q1 med q3 max

/**
 * Percentile with linear interpolation at h = (n-1)p, matching the metrics
 * component exactly (the even-n median is the midpoint of the middle pair).
 */
export function percentile(sorted: number[], p: number): number {
  if (sorted.length === 0) {
    throw new Error("percentile of an empty sample");
  }
  const h = (sorted.length - 1) * p;
  const lo = Math.floor(h);
  const hi = Math.min(lo + 1, sorted.length - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

export function boxStats(values: number[]): BoxStats {
  const sorted = [...values].sort((a, b) => a - b);
  return [
    percentile(sorted, 0),
    percentile(sorted, 0.25),
    percentile(sorted, 0.5),
    percentile(sorted, 0.75),
    percentile(sorted, 1),
  ];
}

export interface PanelSummary {
  axis: string;
  value: number;
  solution: number;
  checkpoints: number[];
  box: Record<string, BoxStats | null>;
  accuracy: Record<string, number>;
  reliability: Record<string, number>;
}

export function panelKey(axis: string, value: number, solution: number): string {
  return `${axis}_${valueLabel(value)}_solution${solution}`;
}

export function valueLabel(value: number): string {
  return Number.isInteger(value) ? String(value) : String(value);
}

/** Per-checkpoint stats for one (axis, value, solution) group. */
export function summarize(
  rows: MetricsRow[],
  axis: string,
  value: number,
  solution: number,
): PanelSummary {
  const group = rows.filter(
    (r) => r.sweepAxis === axis && r.sweepValue === value && r.solution === solution,
  );
  if (group.length === 0) {
    throw new Error(`no rows for ${axis}=${value} solution ${solution}`);
  }
  const checkpoints = [...new Set(group.map((r) => r.checkpointS))].sort((a, b) => a - b);
  const box: Record<string, BoxStats | null> = {};
  const accuracy: Record<string, number> = {};
  const reliability: Record<string, number> = {};
  for (const cp of checkpoints) {
    const atCp = group.filter((r) => r.checkpointS === cp);
    const errors = atCp
      .filter((r) => r.available && r.pointErrorCm !== null)
      .map((r) => r.pointErrorCm as number);
    box[String(cp)] = errors.length > 0 ? boxStats(errors) : null;
    const correct = atCp.filter(
      (r) => r.available && r.predictedRegion === r.eventRegion,
    ).length;
    accuracy[String(cp)] = correct / atCp.length;
    reliability[String(cp)] = atCp.filter((r) => r.available).length / atCp.length;
  }
  return { axis, value, solution, checkpoints, box, accuracy, reliability };
}

export function groupsOnAxis(rows: MetricsRow[], axis: string): Array<[number, number]> {
  const seen = new Map<string, [number, number]>();
  for (const r of rows) {
    if (r.sweepAxis === axis) {
      seen.set(`${r.sweepValue}|${r.solution}`, [r.sweepValue, r.solution]);
    }
  }
  return [...seen.values()].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
}
