/** Deterministic SVG rendering: box-plot series plus two metric curves. */

import { PanelSummary } from "./stats.js";

const W = 720;
const CHART_H = 180;
const PAD = { left: 56, right: 16, top: 26, bottom: 30 };
const GAP = 14;

function fmt(v: number): string {
  return v.toFixed(2);
}

function xScale(checkpoints: number[]): (cp: number, i: number) => number {
  const inner = W - PAD.left - PAD.right;
  const n = checkpoints.length;
  return (_cp, i) => PAD.left + ((i + 0.5) / n) * inner;
}

function yScale(maxVal: number, top: number): (v: number) => number {
  const span = CHART_H - PAD.top - PAD.bottom;
  const safeMax = maxVal > 0 ? maxVal : 1;
  return (v) => top + PAD.top + span * (1 - v / safeMax);
}

function axis(top: number, title: string, maxVal: number, checkpoints: number[]): string {
  const x0 = PAD.left;
  const x1 = W - PAD.right;
  const yBottom = top + CHART_H - PAD.bottom;
  const yTop = top + PAD.top;
  const sx = xScale(checkpoints);
  const parts = [
    `<text x="${x0}" y="${top + 14}" class="title">${title}</text>`,
    `<line x1="${x0}" y1="${yBottom}" x2="${x1}" y2="${yBottom}" class="axis"/>`,
    `<line x1="${x0}" y1="${yTop}" x2="${x0}" y2="${yBottom}" class="axis"/>`,
    `<text x="${x0 - 8}" y="${yTop + 4}" class="tick" text-anchor="end">${fmt(maxVal)}</text>`,
    `<text x="${x0 - 8}" y="${yBottom + 4}" class="tick" text-anchor="end">0</text>`,
  ];
  checkpoints.forEach((cp, i) => {
    parts.push(
      `<text x="${fmt(sx(cp, i))}" y="${yBottom + 16}" class="tick" text-anchor="middle">${cp}</text>`,
    );
  });
  return parts.join("\n");
}

function boxChart(summary: PanelSummary, top: number): string {
  const stats = summary.checkpoints
    .map((cp) => summary.box[String(cp)])
    .filter((b): b is NonNullable<typeof b> => b !== null);
  const maxVal = stats.length > 0 ? Math.max(...stats.map((b) => b[4])) : 1;
  const sx = xScale(summary.checkpoints);
  const sy = yScale(maxVal, top);
  const parts = [axis(top, "point error [cm] per checkpoint [s]", maxVal, summary.checkpoints)];
  const halfBox = Math.min(18, (W - PAD.left - PAD.right) / summary.checkpoints.length / 3);
  summary.checkpoints.forEach((cp, i) => {
    const b = summary.box[String(cp)];
    if (b === null) return;
    const [mn, q1, med, q3, mx] = b;
    const x = sx(cp, i);
    parts.push(
      `<line x1="${fmt(x)}" y1="${fmt(sy(mn))}" x2="${fmt(x)}" y2="${fmt(sy(q1))}" class="whisker"/>`,
      `<line x1="${fmt(x)}" y1="${fmt(sy(q3))}" x2="${fmt(x)}" y2="${fmt(sy(mx))}" class="whisker"/>`,
      `<line x1="${fmt(x - halfBox)}" y1="${fmt(sy(mn))}" x2="${fmt(x + halfBox)}" y2="${fmt(sy(mn))}" class="whisker"/>`,
      `<line x1="${fmt(x - halfBox)}" y1="${fmt(sy(mx))}" x2="${fmt(x + halfBox)}" y2="${fmt(sy(mx))}" class="whisker"/>`,
      `<rect x="${fmt(x - halfBox)}" y="${fmt(sy(q3))}" width="${fmt(2 * halfBox)}" height="${fmt(sy(q1) - sy(q3))}" class="box"/>`,
      `<line x1="${fmt(x - halfBox)}" y1="${fmt(sy(med))}" x2="${fmt(x + halfBox)}" y2="${fmt(sy(med))}" class="median"/>`,
    );
  });
  return parts.join("\n");
}

function curveChart(
  summary: PanelSummary,
  top: number,
  series: Record<string, number>,
  title: string,
): string {
  const sx = xScale(summary.checkpoints);
  const sy = yScale(1.0, top);
  const parts = [axis(top, title, 1.0, summary.checkpoints)];
  const points = summary.checkpoints
    .map((cp, i) => `${fmt(sx(cp, i))},${fmt(sy(series[String(cp)]))}`)
    .join(" ");
  parts.push(`<polyline points="${points}" class="curve"/>`);
  summary.checkpoints.forEach((cp, i) => {
    parts.push(
      `<circle cx="${fmt(sx(cp, i))}" cy="${fmt(sy(series[String(cp)]))}" r="3" class="dot"/>`,
    );
  });
  return parts.join("\n");
}

export function renderPanelSvg(summary: PanelSummary): string {
  const height = 3 * CHART_H + 2 * GAP + 24;
  const header =
    `<text x="${PAD.left}" y="18" class="heading">` +
    `${summary.axis} = ${summary.value}, solution ${summary.solution}</text>`;
  const charts = [
    boxChart(summary, 24),
    curveChart(summary, 24 + CHART_H + GAP, summary.accuracy, "region detection accuracy"),
    curveChart(summary, 24 + 2 * (CHART_H + GAP), summary.reliability, "reliability"),
  ];
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${height}" viewBox="0 0 ${W} ${height}">`,
    "<style>",
    "  text { font: 11px sans-serif; fill: #333; }",
    "  .heading { font: bold 13px sans-serif; }",
    "  .title { font: 12px sans-serif; }",
    "  .axis { stroke: #333; stroke-width: 1; }",
    "  .whisker { stroke: #1f77b4; stroke-width: 1; }",
    "  .box { fill: #9ecae1; stroke: #1f77b4; }",
    "  .median { stroke: #08306b; stroke-width: 2; }",
    "  .curve { fill: none; stroke: #d62728; stroke-width: 1.5; }",
    "  .dot { fill: #d62728; }",
    "</style>",
    header,
    ...charts,
    "</svg>",
  ].join("\n");
}
