/**
 * Minimal deterministic SVG line plots: same input, same bytes.
 * No timestamps, no randomness, fixed palette and number formatting.
 */

import { Series } from "./trace";

const WIDTH = 860;
const HEIGHT = 520;
const MARGIN = { left: 78, right: 24, top: 46, bottom: 58 };

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

export interface PlotSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  logY?: boolean;
}

function fmt(x: number): string {
  if (x === 0) return "0";
  const a = Math.abs(x);
  if (a >= 1e4 || a < 1e-3) return x.toExponential(2);
  return Number(x.toPrecision(6)).toString();
}

function coord(x: number): string {
  return x.toFixed(2);
}

function linTicks(lo: number, hi: number, n = 6): number[] {
  if (hi <= lo) return [lo];
  const raw = (hi - lo) / n;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 2.5, 5, 10].map((m) => m * mag).find((s) => (hi - lo) / s <= n)!;
  const out: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * step; t += step) out.push(t);
  return out;
}

function logTicks(lo: number, hi: number): number[] {
  const out: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    const t = Math.pow(10, e);
    if (t >= lo / 1.0001 && t <= hi * 1.0001) out.push(t);
  }
  return out.length ? out : [lo, hi];
}

export function renderPlot(series: Series[], spec: PlotSpec): string {
  const drawable = series.filter((s) => s.points.length > 0);
  const logY = !!spec.logY;
  const usable = drawable.map((s) => ({
    ...s,
    points: logY ? s.points.filter((p) => p.y > 0) : s.points,
  }));
  const allPts = usable.flatMap((s) => s.points);

  const body: string[] = [];
  body.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`
  );
  body.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  body.push(
    `<text x="${WIDTH / 2}" y="26" text-anchor="middle" font-size="17">${spec.title}</text>`
  );

  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;

  if (allPts.length === 0) {
    body.push(
      `<text x="${WIDTH / 2}" y="${HEIGHT / 2}" text-anchor="middle" font-size="14" fill="#888">no drawable points (all checkpoints unresolved or filtered)</text>`
    );
    body.push("</svg>");
    return body.join("\n") + "\n";
  }

  let xLo = Math.min(...allPts.map((p) => p.x));
  let xHi = Math.max(...allPts.map((p) => p.x));
  let yLo = Math.min(...allPts.map((p) => p.y));
  let yHi = Math.max(...allPts.map((p) => p.y));
  if (xHi === xLo) {
    xHi = xLo + (xLo === 0 ? 1 : Math.abs(xLo) * 0.1);
    xLo = xLo - (xHi - xLo);
  }
  if (yHi === yLo) {
    if (logY) {
      yHi = yLo * 10;
      yLo = yLo / 10;
    } else {
      const pad = yLo === 0 ? 1 : Math.abs(yLo) * 0.1;
      yHi += pad;
      yLo -= pad;
    }
  }

  const sx = (x: number) => x0 + ((x - xLo) / (xHi - xLo)) * (x1 - x0);
  const sy = (y: number) =>
    logY
      ? y0 - ((Math.log10(y) - Math.log10(yLo)) / (Math.log10(yHi) - Math.log10(yLo))) * (y0 - y1)
      : y0 - ((y - yLo) / (yHi - yLo)) * (y0 - y1);

  for (const t of linTicks(xLo, xHi)) {
    const px = sx(t);
    body.push(
      `<line x1="${coord(px)}" y1="${y0}" x2="${coord(px)}" y2="${y1}" stroke="#eee"/>`,
      `<text x="${coord(px)}" y="${y0 + 20}" text-anchor="middle" font-size="12">${fmt(t)}</text>`
    );
  }
  for (const t of logY ? logTicks(yLo, yHi) : linTicks(yLo, yHi)) {
    const py = sy(t);
    body.push(
      `<line x1="${x0}" y1="${coord(py)}" x2="${x1}" y2="${coord(py)}" stroke="#eee"/>`,
      `<text x="${x0 - 8}" y="${coord(py + 4)}" text-anchor="end" font-size="12">${fmt(t)}</text>`
    );
  }
  body.push(
    `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="#333"/>`,
    `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#333"/>`,
    `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="13">${spec.xLabel}</text>`,
    `<text x="20" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 ${(y0 + y1) / 2})">${spec.yLabel}</text>`
  );

  usable.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    if (s.points.length > 1) {
      const path = s.points.map((p) => `${coord(sx(p.x))},${coord(sy(p.y))}`).join(" ");
      body.push(`<polyline points="${path}" fill="none" stroke="${color}" stroke-width="1.8"/>`);
    }
    for (const p of s.points) {
      body.push(
        `<circle cx="${coord(sx(p.x))}" cy="${coord(sy(p.y))}" r="3" fill="${color}"/>`
      );
    }
    const ly = y1 + 16 + 18 * i;
    const note = s.dropped > 0 ? ` (${s.dropped} unresolved dropped)` : "";
    body.push(
      `<line x1="${x1 - 190}" y1="${ly - 4}" x2="${x1 - 166}" y2="${ly - 4}" stroke="${color}" stroke-width="2"/>`,
      `<text x="${x1 - 160}" y="${ly}" font-size="12">${s.label}${note}</text>`
    );
  });

  body.push("</svg>");
  return body.join("\n") + "\n";
}
