import * as fs from "node:fs";
import * as path from "node:path";

import { parseCsv } from "./csv";
import { checkOverlayDominates, OverlayViolation } from "./overlay";
import { Band, groupSeries, Overlay, readOverlay } from "./series";
import { PlotSpec } from "./spec";
import {
  bandPath,
  escapeXml,
  formatTick,
  linearScale,
  linearTicks,
  logScale,
  logTicks,
  polylinePath,
  Scale,
} from "./svg";

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

const MARGIN = { top: 36, right: 16, bottom: 44, left: 64 };

interface Rendered {
  svg: string;
  bands: Band[];
  overlay?: Overlay;
  overlayViolations: OverlayViolation[];
}

function dataRange(bands: Band[], overlay: Overlay | undefined, logY: boolean) {
  let yLo = Infinity;
  let yHi = -Infinity;
  let xLo = Infinity;
  let xHi = -Infinity;
  for (const b of bands) {
    for (let i = 0; i < b.epochs.length; i++) {
      const lo = b.mean[i] - b.std[i];
      const hi = b.mean[i] + b.std[i];
      yLo = Math.min(yLo, logY && lo <= 0 ? b.mean[i] : lo);
      yHi = Math.max(yHi, hi);
      xLo = Math.min(xLo, b.epochs[i]);
      xHi = Math.max(xHi, b.epochs[i]);
    }
  }
  if (overlay) {
    yHi = Math.max(yHi, ...overlay.total);
    if (!logY) {
      yLo = Math.min(yLo, ...overlay.total);
    }
  }
  if (logY && !(yLo > 0)) {
    yLo = 1e-12;
  }
  return { xLo, xHi, yLo, yHi };
}

/** Render the spec to an SVG string plus the series it drew. */
export function renderSpec(spec: PlotSpec): Rendered {
  const table = parseCsv(fs.readFileSync(spec.input, "utf-8"));
  const bands = groupSeries(table, spec.metric, spec.groupBy, spec.startEpoch);
  if (bands.length === 0) {
    throw new Error(`no plottable groups for metric ${spec.metric}`);
  }
  let overlay: Overlay | undefined;
  if (spec.overlay) {
    overlay = readOverlay(parseCsv(fs.readFileSync(spec.overlay, "utf-8")));
  }

  const { xLo, xHi, yLo, yHi } = dataRange(bands, overlay, spec.logY);
  const innerW = spec.width - MARGIN.left - MARGIN.right;
  const innerH = spec.height - MARGIN.top - MARGIN.bottom;
  const sx = linearScale(xLo, xHi, MARGIN.left, MARGIN.left + innerW);
  const sy: Scale = spec.logY
    ? logScale(yLo, yHi, MARGIN.top + innerH, MARGIN.top)
    : linearScale(yLo, yHi, MARGIN.top + innerH, MARGIN.top);
  const clampY = (v: number) => (spec.logY ? Math.max(v, yLo) : v);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${spec.width}" height="${spec.height}" viewBox="0 0 ${spec.width} ${spec.height}">`,
  );
  parts.push(`<rect width="${spec.width}" height="${spec.height}" fill="white"/>`);
  if (spec.title) {
    parts.push(
      `<text x="${spec.width / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">${escapeXml(spec.title)}</text>`,
    );
  }

  const yTicks = spec.logY ? logTicks(yLo, yHi) : linearTicks(yLo, yHi);
  for (const t of yTicks) {
    const y = sy(t);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${y.toFixed(2)}" x2="${MARGIN.left + innerW}" y2="${y.toFixed(2)}" stroke="#dddddd" stroke-width="1"/>`,
      `<text x="${MARGIN.left - 6}" y="${(y + 4).toFixed(2)}" text-anchor="end" font-family="sans-serif" font-size="10">${formatTick(t)}</text>`,
    );
  }
  for (const t of linearTicks(xLo, xHi)) {
    const x = sx(t);
    parts.push(
      `<line x1="${x.toFixed(2)}" y1="${MARGIN.top + innerH}" x2="${x.toFixed(2)}" y2="${MARGIN.top + innerH + 4}" stroke="#333333"/>`,
      `<text x="${x.toFixed(2)}" y="${MARGIN.top + innerH + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">${formatTick(t)}</text>`,
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${innerW}" height="${innerH}" fill="none" stroke="#333333"/>`,
    `<text x="${MARGIN.left + innerW / 2}" y="${spec.height - 10}" text-anchor="middle" font-family="sans-serif" font-size="11">epoch</text>`,
    `<text transform="translate(14,${MARGIN.top + innerH / 2}) rotate(-90)" text-anchor="middle" font-family="sans-serif" font-size="11">${escapeXml(spec.metric.replace(/_/g, " "))}</text>`,
  );

  bands.forEach((band, k) => {
    const color = PALETTE[k % PALETTE.length];
    const xs = band.epochs.map(sx);
    const upper = band.mean.map((m, i) => sy(clampY(m + band.std[i])));
    const lower = band.mean.map((m, i) => sy(clampY(m - band.std[i])));
    if (band.std.some((s) => s > 0)) {
      parts.push(
        `<path d="${bandPath(xs, upper, lower)}" fill="${color}" fill-opacity="0.15" stroke="none"/>`,
      );
    }
    parts.push(
      `<path d="${polylinePath(xs, band.mean.map((m) => sy(clampY(m))))}" fill="none" stroke="${color}" stroke-width="1.6"/>`,
    );
  });

  let overlayViolations: OverlayViolation[] = [];
  if (overlay) {
    const visible = overlay.epochs
      .map((e, i) => ({ e, v: overlay!.total[i] }))
      .filter(({ e }) => e >= xLo && e <= xHi);
    const xs = visible.map(({ e }) => sx(e));
    const ys = visible.map(({ v }) => sy(clampY(Math.min(v, yHi))));
    parts.push(
      `<path d="${polylinePath(xs, ys)}" fill="none" stroke="#000000" stroke-width="1.2" stroke-dasharray="6,3"/>`,
    );
    overlayViolations = checkOverlayDominates(bands[0], overlay);
  }

  // legend: group order follows first appearance in the CSV
  const legendX = MARGIN.left + 10;
  bands.forEach((band, k) => {
    const y = MARGIN.top + 14 + 14 * k;
    parts.push(
      `<line x1="${legendX}" y1="${y - 4}" x2="${legendX + 18}" y2="${y - 4}" stroke="${PALETTE[k % PALETTE.length]}" stroke-width="2"/>`,
      `<text x="${legendX + 24}" y="${y}" font-family="sans-serif" font-size="10">${escapeXml(band.label)}</text>`,
    );
  });
  if (overlay) {
    const y = MARGIN.top + 14 + 14 * bands.length;
    parts.push(
      `<line x1="${legendX}" y1="${y - 4}" x2="${legendX + 18}" y2="${y - 4}" stroke="#000000" stroke-width="1.2" stroke-dasharray="6,3"/>`,
      `<text x="${legendX + 24}" y="${y}" font-family="sans-serif" font-size="10">certificate (${escapeXml(overlay.target)})</text>`,
    );
  }
  parts.push("</svg>");
  return { svg: parts.join("\n"), bands, overlay, overlayViolations };
}

/** Render and write the SVG; returns the written path and check results. */
export function renderToFile(spec: PlotSpec): Rendered & { output: string } {
  const rendered = renderSpec(spec);
  fs.mkdirSync(path.dirname(spec.output), { recursive: true });
  fs.writeFileSync(spec.output, rendered.svg, "utf-8");
  return { ...rendered, output: spec.output };
}
