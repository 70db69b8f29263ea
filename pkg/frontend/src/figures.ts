/** Figure generation and the golden summary-statistics smoke check. */

import * as fs from "node:fs";
import * as path from "node:path";

import { parseMetricsCsv, MetricsRow } from "./csv.js";
import { groupsOnAxis, panelKey, PanelSummary, summarize, valueLabel } from "./stats.js";
import { renderPanelSvg } from "./svg.js";

export interface FigureSpec {
  csvPath: string;
  axis: string;
  outDir: string;
  format: string; // vector only
}

export const KNOWN_AXES = ["devices", "sampling", "thresholds"];
const TOLERANCE = 1e-9;

export function loadRows(csvPath: string): MetricsRow[] {
  return parseMetricsCsv(fs.readFileSync(csvPath, "utf-8"));
}

export function renderFigures(spec: FigureSpec): string[] {
  if (spec.format !== "svg") {
    throw new Error(`unsupported format '${spec.format}': this renderer emits svg`);
  }
  if (!KNOWN_AXES.includes(spec.axis)) {
    throw new Error(`unknown sweep axis '${spec.axis}' (expected one of ${KNOWN_AXES.join(", ")})`);
  }
  const rows = loadRows(spec.csvPath);
  const groups = groupsOnAxis(rows, spec.axis);
  if (groups.length === 0) {
    throw new Error(`no rows for axis '${spec.axis}' in ${spec.csvPath}`);
  }
  fs.mkdirSync(spec.outDir, { recursive: true });
  const written: string[] = [];
  for (const [value, solution] of groups) {
    const summary = summarize(rows, spec.axis, value, solution);
    const name = `${spec.axis}_${valueLabel(value)}_solution${solution}.svg`;
    const file = path.join(spec.outDir, name);
    fs.writeFileSync(file, renderPanelSvg(summary), "utf-8");
    written.push(file);
  }
  return written.sort();
}

export function computeSummaries(csvPath: string, axes: string[] = KNOWN_AXES): Record<string, PanelSummary> {
  const rows = loadRows(csvPath);
  const out: Record<string, PanelSummary> = {};
  for (const axis of axes) {
    for (const [value, solution] of groupsOnAxis(rows, axis)) {
      out[panelKey(axis, value, solution)] = summarize(rows, axis, value, solution);
    }
  }
  return out;
}

export function writeGolden(csvPath: string, goldenDir: string): string {
  const summaries = computeSummaries(csvPath);
  fs.mkdirSync(goldenDir, { recursive: true });
  const file = path.join(goldenDir, "summaries.json");
  fs.writeFileSync(file, JSON.stringify(summaries, null, 1), "utf-8");
  return file;
}

export interface SmokeFailure {
  figure: string;
  detail: string;
}

/** Recompute per-figure summary stats and diff them against the goldens. */
export function smokeCheck(csvPath: string, goldenDir: string): SmokeFailure[] {
  const goldenFile = path.join(goldenDir, "summaries.json");
  if (!fs.existsSync(goldenFile)) {
    throw new Error(`golden file not found: ${goldenFile}`);
  }
  const golden: Record<string, PanelSummary> = JSON.parse(fs.readFileSync(goldenFile, "utf-8"));
  const current = computeSummaries(csvPath);
  const failures: SmokeFailure[] = [];
  const names = new Set([...Object.keys(golden), ...Object.keys(current)]);
  for (const name of [...names].sort()) {
    const g = golden[name];
    const c = current[name];
    if (!g || !c) {
      failures.push({ figure: name, detail: g ? "missing from current" : "missing from golden" });
      continue;
    }
    const detail = diffSummary(g, c);
    if (detail !== null) {
      failures.push({ figure: name, detail });
    }
  }
  return failures;
}

function diffSummary(g: PanelSummary, c: PanelSummary): string | null {
  if (g.checkpoints.join(",") !== c.checkpoints.join(",")) {
    return `checkpoints ${g.checkpoints} != ${c.checkpoints}`;
  }
  for (const cp of g.checkpoints) {
    const key = String(cp);
    const gb = g.box[key];
    const cb = c.box[key];
    if ((gb === null) !== (cb === null)) {
      return `box presence differs at t=${cp}`;
    }
    if (gb && cb) {
      for (let i = 0; i < 5; i++) {
        if (Math.abs(gb[i] - cb[i]) > TOLERANCE) {
          return `box[${i}] at t=${cp}: ${gb[i]} != ${cb[i]}`;
        }
      }
    }
    for (const series of ["accuracy", "reliability"] as const) {
      if (Math.abs(g[series][key] - c[series][key]) > TOLERANCE) {
        return `${series} at t=${cp}: ${g[series][key]} != ${c[series][key]}`;
      }
    }
  }
  return null;
}
