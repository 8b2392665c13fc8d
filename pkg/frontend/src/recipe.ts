/** Figure recipes: which rows each figure family selects and how they group. */

import { EmptyFilter, SweepRow } from "./csv";

export type FigureKind = "pmd" | "ber" | "sumrate" | "rmse" | "eta";

export const FIGURE_KINDS: FigureKind[] = ["pmd", "ber", "sumrate", "rmse", "eta"];

export interface FigureRecipe {
  csvPath: string;
  figure: FigureKind;
  outPath: string;
}

export interface SeriesPoint {
  x: number;
  y: number;
  ci99: number;
}

export interface Series {
  label: string;
  points: SeriesPoint[];
}

export interface FigureData {
  title: string;
  xLabel: string;
  yLabel: string;
  logY: boolean;
  series: Series[];
  /** second axis for the dual eta figure */
  series2?: Series[];
  y2Label?: string;
  kneeX?: number;
}

interface LineSpec {
  metric: string;
  x: keyof SweepRow;
  /** prefer the requested sweep value over the recorded column (e.g. the z
   * column holds the effective device count after capacity truncation) */
  xParam?: string;
  groupBy: keyof SweepRow;
  groupLabel: (v: number) => string;
  title: string;
  xLabel: string;
  yLabel: string;
  logY: boolean;
  yScale?: number;
}

const LINE_SPECS: Record<Exclude<FigureKind, "eta">, LineSpec> = {
  pmd: {
    metric: "pmd",
    x: "snr_db",
    groupBy: "alpha",
    groupLabel: (v) => `alpha = ${v}`,
    title: "Missed-detection probability vs SNR",
    xLabel: "SNR (dB)",
    yLabel: "PMD",
    logY: true,
  },
  ber: {
    metric: "ber",
    x: "snr_db",
    groupBy: "p_pilot_db",
    groupLabel: (v) => `pilot ${v} dB`,
    title: "Primary-link BER vs SNR",
    xLabel: "SNR (dB)",
    yLabel: "BER",
    logY: true,
  },
  sumrate: {
    metric: "r_sum_bps",
    x: "z",
    xParam: "z",
    groupBy: "n",
    groupLabel: (v) => `N = ${v}`,
    title: "Sum rate vs number of devices",
    xLabel: "active devices",
    yLabel: "sum rate (Mbit/s)",
    logY: false,
    yScale: 1e-6,
  },
  rmse: {
    metric: "rmse_m",
    x: "snr_db",
    groupBy: "alpha",
    groupLabel: (v) => `alpha = ${v}`,
    title: "Range RMSE vs SNR",
    xLabel: "SNR (dB)",
    yLabel: "RMSE (m)",
    logY: true,
  },
};

function byX(a: SeriesPoint, b: SeriesPoint): number {
  return a.x - b.x;
}

function xValue(r: SweepRow, spec: LineSpec): number {
  if (spec.xParam) {
    const names = r.param_name.split(",");
    const idx = names.indexOf(spec.xParam);
    if (idx >= 0) {
      return Number(r.param_value.split(",")[idx]);
    }
  }
  return Number(r[spec.x]);
}

function lineFigure(rows: SweepRow[], spec: LineSpec): FigureData {
  const picked = rows.filter((r) => r.metric === spec.metric);
  if (picked.length === 0) {
    throw new EmptyFilter(`metric ${spec.metric}`);
  }
  let groupBy = spec.groupBy;
  let labelOf = spec.groupLabel;
  let values = [...new Set(picked.map((r) => Number(r[groupBy])))];
  if (values.length <= 1) {
    // fall back to the other natural grouping when the sweep held it fixed
    groupBy = groupBy === "alpha" ? "p_pilot_db" : "alpha";
    labelOf = groupBy === "alpha" ? (v) => `alpha = ${v}` : (v) => `pilot ${v} dB`;
    values = [...new Set(picked.map((r) => Number(r[groupBy])))];
  }
  values.sort((a, b) => a - b);
  const scale = spec.yScale ?? 1;
  const series: Series[] = values.map((v) => ({
    label: labelOf(v),
    points: picked
      .filter((r) => Number(r[groupBy]) === v)
      .map((r) => ({ x: xValue(r, spec), y: r.value * scale, ci99: r.ci99 * scale }))
      .sort(byX),
  }));
  return {
    title: spec.title,
    xLabel: spec.xLabel,
    yLabel: spec.yLabel,
    logY: spec.logY,
    series,
  };
}

/**
 * Saturation knee of a decreasing curve: the first x where the remaining
 * improvement is below 10% of the improvement accumulated so far.
 */
export function kneeOf(points: SeriesPoint[]): number | undefined {
  const p = [...points].sort(byX);
  if (p.length < 3) return undefined;
  const first = p[0].y;
  const last = p[p.length - 1].y;
  for (let i = 1; i < p.length - 1; i++) {
    const gained = first - p[i].y;
    const remaining = p[i].y - last;
    if (gained > 0 && remaining < 0.1 * gained) {
      return p[i].x;
    }
  }
  return undefined;
}

function etaFigure(rows: SweepRow[]): FigureData {
  // Every point reports its eta_db, so restrict to points where eta_db was
  // actually the swept parameter; fall back to all rows for single-purpose CSVs.
  const swept = rows.filter((r) => r.param_name.split(",").includes("eta_db"));
  const pool = swept.length > 0 ? swept : rows;
  // pivot per point: x = the point's eta_db metric, y1 = pmd, y2 = rmse_m
  const byPoint = new Map<string, Map<string, number>>();
  for (const r of pool) {
    if (!byPoint.has(r.point_id)) byPoint.set(r.point_id, new Map());
    byPoint.get(r.point_id)!.set(r.metric, r.value);
  }
  const pmd: SeriesPoint[] = [];
  const rmse: SeriesPoint[] = [];
  for (const metrics of byPoint.values()) {
    const eta = metrics.get("eta_db");
    if (eta === undefined) continue;
    if (metrics.has("pmd")) pmd.push({ x: eta, y: metrics.get("pmd")!, ci99: 0 });
    if (metrics.has("rmse_m")) rmse.push({ x: eta, y: metrics.get("rmse_m")!, ci99: 0 });
  }
  if (pmd.length === 0 || rmse.length === 0) {
    throw new EmptyFilter("eta figure needs pmd and rmse_m rows with eta_db");
  }
  pmd.sort(byX);
  rmse.sort(byX);
  return {
    title: "Detection and sensing vs pilot-to-data power ratio",
    xLabel: "eta (dB)",
    yLabel: "PMD",
    logY: true,
    series: [{ label: "PMD", points: pmd }],
    series2: [{ label: "RMSE (m)", points: rmse }],
    y2Label: "RMSE (m)",
    kneeX: kneeOf(pmd),
  };
}

export function figureData(figure: FigureKind, rows: SweepRow[]): FigureData {
  if (figure === "eta") {
    return etaFigure(rows);
  }
  return lineFigure(rows, LINE_SPECS[figure]);
}
