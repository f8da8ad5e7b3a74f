/**
 * The three run-directory panels:
 *
 *   plot_decay  — semilog residual history with the fitted decay rate
 *   plot_slopes — ring-averaged log singular values vs log radius with
 *                 integer guide lines
 *   plot_morrey — log-log g(r) with its fitted exponent
 *
 * Each writes <name>.svg plus <name>_fit.json next to it.  Run
 * directories are never modified beyond adding these outputs... the
 * inputs themselves are read-only.
 */

import { existsSync, readFileSync, writeFileSync } from "fs";
import { join } from "path";

import { readCsv, numericColumn, column } from "./csv.js";
import { decayFit, linearFit, loglogFit } from "./fit.js";
import { renderPlot } from "./svg.js";

export class MissingArtifact extends Error {}

function requireFile(runDir: string, name: string): string {
  const p = join(runDir, name);
  if (!existsSync(p)) {
    throw new MissingArtifact(`${name} not found in ${runDir}`);
  }
  return p;
}

export interface PlotResult {
  svgPath: string;
  fitPath: string;
  fit: Record<string, unknown>;
}

export function plotDecay(runDir: string, outDir?: string): PlotResult {
  const hist = readCsv(requireFile(runDir, "history.csv"));
  if (hist.rows.length === 0) {
    throw new MissingArtifact("history.csv is empty");
  }
  const t = numericColumn(hist, "t");
  const res = numericColumn(hist, "res_tracefree");
  const pts = t.map((tv, i) => [tv, res[i]] as const)
    .filter(([, r]) => r > 0);
  const logPts = pts.map(([tv, r]) => [tv, Math.log10(r)] as const);

  const series: import("./svg.js").Series[] = [{
    x: logPts.map((p) => p[0]),
    y: logPts.map((p) => p[1]),
    label: "residual",
    markers: true,
  }];
  const annotations: string[] = [];
  const fitInfo: Record<string, unknown> = { n_rows: hist.rows.length };
  if (pts.length >= 4) {
    const fit = decayFit(t, res);
    const lambda = -fit.slope;
    fitInfo.lambda = lambda;
    fitInfo.r_squared = fit.r_squared;
    annotations.push(
      `lambda = ${lambda.toFixed(4)} (R^2 = ${fit.r_squared.toFixed(3)})`);
    const f0 = fit.intercept / Math.LN10;
    series.push({
      x: [t[0], t[t.length - 1]],
      y: [f0 + (fit.slope / Math.LN10) * t[0],
          f0 + (fit.slope / Math.LN10) * t[t.length - 1]],
      label: "fit",
      dashed: true,
    });
  } else {
    fitInfo.lambda = null;
    annotations.push("tail too short for a decay fit");
  }
  const svg = renderPlot({
    title: "residual decay",
    xlabel: "t",
    ylabel: "log10 residual",
    series,
    annotations,
  });
  const base = outDir ?? runDir;
  const svgPath = join(base, "decay.svg");
  const fitPath = join(base, "decay_fit.json");
  writeFileSync(svgPath, svg);
  writeFileSync(fitPath, JSON.stringify(fitInfo, null, 2) + "\n");
  return { svgPath, fitPath, fit: fitInfo };
}

export function plotSlopes(runDir: string, outDir?: string): PlotResult {
  const tab = readCsv(requireFile(runDir, "scattering.csv"));
  if (tab.rows.length === 0) {
    throw new MissingArtifact("scattering.csv is empty");
  }
  const radii = numericColumn(tab, "ring_radius");
  const logsv = column(tab, "log_sv").map((c) => c.split(";").map(Number));
  const slopes = column(tab, "slopes")[0].split(";").map(Number);
  const punctures = column(tab, "puncture");
  const winding = column(tab, "winding")[0];

  // group rows by puncture; plot the first puncture's rings
  const first = punctures[0];
  const keep = punctures.map((p) => p === first);
  const r = radii.filter((_, i) => keep[i]);
  const sv = logsv.filter((_, i) => keep[i]);
  const nsv = sv[0].length;
  const series: import("./svg.js").Series[] = [];
  const fits: number[] = [];
  for (let j = 0; j < nsv; j++) {
    const ys = sv.map((v) => v[j] / Math.LN10);
    const xs = r.map((v) => Math.log10(v));
    const fit = linearFit(xs, ys);
    fits.push(fit.slope);
    series.push({ x: xs, y: ys, label: `sv ${j + 1}`, markers: true });
    const k = Math.round(fit.slope);
    // integer-slope guide anchored at the first ring
    series.push({
      x: [xs[0], xs[xs.length - 1]],
      y: [ys[0], ys[0] + k * (xs[xs.length - 1] - xs[0])],
      dashed: true,
      label: `guide k=${k}`,
    });
  }
  const highlighted = fits.map((s) =>
    Math.abs(s - Math.round(s)) < 0.25 ? Math.round(s) : null);
  const fitInfo = {
    puncture: first,
    slopes: fits,
    rounded: highlighted,
    winding: Number(winding),
  };
  const svg = renderPlot({
    title: `type extraction (puncture ${first})`,
    xlabel: "log10 |z - z0|",
    ylabel: "log10 singular values",
    series,
    annotations: [
      `slopes: ${fits.map((s) => s.toFixed(3)).join(", ")}`,
      `winding: ${winding}`,
    ],
  });
  const base = outDir ?? runDir;
  const svgPath = join(base, "slopes.svg");
  const fitPath = join(base, "slopes_fit.json");
  writeFileSync(svgPath, svg);
  writeFileSync(fitPath, JSON.stringify(fitInfo, null, 2) + "\n");
  return { svgPath, fitPath, fit: fitInfo };
}

export function plotMorrey(runDir: string, outDir?: string): PlotResult {
  const tab = readCsv(requireFile(runDir, "morrey.csv"));
  if (tab.rows.length === 0) {
    throw new MissingArtifact("morrey.csv is empty");
  }
  const r = numericColumn(tab, "r");
  const gv = numericColumn(tab, "g");
  const fit = loglogFit(r, gv);
  const fitInfo = {
    exponent: fit.slope,
    r_squared: fit.r_squared,
    producer_exponent: Number(column(tab, "fitted_exponent")[0]),
  };
  const xs = r.map((v) => Math.log10(v));
  const ys = gv.map((v) => Math.log10(v));
  const guide: import("./svg.js").Series = {
    x: [xs[0], xs[xs.length - 1]],
    y: [ys[0], ys[0] + fit.slope * (xs[xs.length - 1] - xs[0])],
    dashed: true,
    label: `fit ${fit.slope.toFixed(2)}`,
  };
  const svg = renderPlot({
    title: "Morrey quantity g(r)",
    xlabel: "log10 r",
    ylabel: "log10 g",
    series: [{ x: xs, y: ys, label: "g(r)", markers: true }, guide],
    annotations: [`fitted exponent ${fit.slope.toFixed(3)}`],
  });
  const base = outDir ?? runDir;
  const svgPath = join(base, "morrey.svg");
  const fitPath = join(base, "morrey_fit.json");
  writeFileSync(svgPath, svg);
  writeFileSync(fitPath, JSON.stringify(fitInfo, null, 2) + "\n");
  return { svgPath, fitPath, fit: fitInfo };
}
