/** Least-squares line fits used by every panel. */

export interface LineFit {
  slope: number;
  intercept: number;
  r_squared: number;
  n: number;
}

export function linearFit(x: number[], y: number[]): LineFit {
  const n = x.length;
  if (n < 2) {
    return { slope: 0, intercept: n ? y[0] : 0, r_squared: 0, n };
  }
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) ** 2;
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) ** 2;
  }
  const slope = sxx > 0 ? sxy / sxx : 0;
  const intercept = my - slope * mx;
  const r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1;
  return { slope, intercept, r_squared: r2, n };
}

/** Fit log(y) = -lambda t + c on the trailing half of a history. */
export function decayFit(t: number[], res: number[]): LineFit {
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < t.length; i++) {
    if (res[i] > 0) {
      pts.push([t[i], Math.log(res[i])]);
    }
  }
  const tail = pts.slice(Math.floor(pts.length / 2));
  const fit = linearFit(tail.map((p) => p[0]), tail.map((p) => p[1]));
  return { ...fit, slope: fit.slope };
}

/** Fit log(g) against log(r). */
export function loglogFit(r: number[], g: number[]): LineFit {
  const xs: number[] = [];
  const ys: number[] = [];
  for (let i = 0; i < r.length; i++) {
    if (r[i] > 0 && g[i] > 0) {
      xs.push(Math.log(r[i]));
      ys.push(Math.log(g[i]));
    }
  }
  return linearFit(xs, ys);
}
