/**
 * Hand-rolled SVG plotting: axes, ticks, polylines, guide lines, labels.
 * Output is deterministic (fixed styles, no timestamps) so figures
 * regenerate byte-identically from identical CSVs.
 */

const W = 720;
const H = 480;
const M = { left: 70, right: 20, top: 34, bottom: 52 };

export interface Series {
  x: number[];
  y: number[];
  color?: string;
  label?: string;
  dashed?: boolean;
  markers?: boolean;
}

export interface PlotSpec {
  title: string;
  xlabel: string;
  ylabel: string;
  series: Series[];
  annotations?: string[];
}

function extent(vals: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of vals) {
    if (Number.isFinite(v)) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  if (!(lo < hi)) {
    lo = lo === Infinity ? 0 : lo - 1;
    hi = lo + 2;
  }
  return [lo, hi];
}

function ticks(lo: number, hi: number, n = 6): number[] {
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const mult = [1, 2, 5, 10].find((m) => span / (step * m) <= n) ?? 10;
  const s = step * mult;
  const first = Math.ceil(lo / s) * s;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += s) {
    out.push(v);
  }
  return out;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.01 && a < 10000) {
    return String(Math.round(v * 1e6) / 1e6);
  }
  return v.toExponential(1);
}

export function renderPlot(spec: PlotSpec): string {
  const xs = spec.series.flatMap((s) => s.x);
  const ys = spec.series.flatMap((s) => s.y);
  const [x0, x1] = extent(xs);
  const [y0, y1] = extent(ys);
  const sx = (v: number) =>
    M.left + ((v - x0) / (x1 - x0)) * (W - M.left - M.right);
  const sy = (v: number) =>
    H - M.bottom - ((v - y0) / (y1 - y0)) * (H - M.top - M.bottom);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" ` +
    `viewBox="0 0 ${W} ${H}" font-family="Helvetica, Arial, sans-serif">`);
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);
  parts.push(
    `<text x="${W / 2}" y="20" text-anchor="middle" font-size="15">` +
    `${spec.title}</text>`);

  for (const tx of ticks(x0, x1)) {
    const px = sx(tx);
    parts.push(
      `<line x1="${px.toFixed(2)}" y1="${M.top}" x2="${px.toFixed(2)}" ` +
      `y2="${H - M.bottom}" stroke="#dddddd" stroke-width="1"/>`);
    parts.push(
      `<text x="${px.toFixed(2)}" y="${H - M.bottom + 18}" ` +
      `text-anchor="middle" font-size="11">${fmt(tx)}</text>`);
  }
  for (const ty of ticks(y0, y1)) {
    const py = sy(ty);
    parts.push(
      `<line x1="${M.left}" y1="${py.toFixed(2)}" x2="${W - M.right}" ` +
      `y2="${py.toFixed(2)}" stroke="#dddddd" stroke-width="1"/>`);
    parts.push(
      `<text x="${M.left - 8}" y="${(py + 4).toFixed(2)}" ` +
      `text-anchor="end" font-size="11">${fmt(ty)}</text>`);
  }
  parts.push(
    `<rect x="${M.left}" y="${M.top}" width="${W - M.left - M.right}" ` +
    `height="${H - M.top - M.bottom}" fill="none" stroke="#333333"/>`);
  parts.push(
    `<text x="${W / 2}" y="${H - 14}" text-anchor="middle" ` +
    `font-size="13">${spec.xlabel}</text>`);
  parts.push(
    `<text x="18" y="${H / 2}" text-anchor="middle" font-size="13" ` +
    `transform="rotate(-90 18 ${H / 2})">${spec.ylabel}</text>`);

  const palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
  spec.series.forEach((s, i) => {
    const color = s.color ?? palette[i % palette.length];
    const pts: string[] = [];
    for (let j = 0; j < s.x.length; j++) {
      if (Number.isFinite(s.x[j]) && Number.isFinite(s.y[j])) {
        pts.push(`${sx(s.x[j]).toFixed(2)},${sy(s.y[j]).toFixed(2)}`);
      }
    }
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" ` +
      `stroke-width="1.7"${dash}/>`);
    if (s.markers) {
      for (const p of pts) {
        const [px, py] = p.split(",");
        parts.push(
          `<circle cx="${px}" cy="${py}" r="3" fill="${color}"/>`);
      }
    }
    if (s.label) {
      const ly = M.top + 16 + 16 * i;
      parts.push(
        `<line x1="${W - 190}" y1="${ly - 4}" x2="${W - 165}" ` +
        `y2="${ly - 4}" stroke="${color}" stroke-width="2"${dash}/>`);
      parts.push(
        `<text x="${W - 158}" y="${ly}" font-size="11">${s.label}</text>`);
    }
  });

  (spec.annotations ?? []).forEach((a, i) => {
    parts.push(
      `<text x="${M.left + 10}" y="${M.top + 18 + 15 * i}" ` +
      `font-size="12" fill="#444444">${a}</text>`);
  });
  parts.push("</svg>");
  return parts.join("\n");
}
