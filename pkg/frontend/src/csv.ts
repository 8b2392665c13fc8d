/** Sweep-CSV loading and validation against the simulator's column contract. */

import * as fs from "fs";
import Papa from "papaparse";

export const REQUIRED_COLUMNS = [
  "point_id",
  "param_name",
  "param_value",
  "snr_db",
  "alpha",
  "p_pilot_db",
  "n",
  "z",
  "metric",
  "value",
  "ci99",
  "trials",
  "seed",
] as const;

export interface SweepRow {
  point_id: string;
  param_name: string;
  param_value: string;
  snr_db: number;
  alpha: number;
  p_pilot_db: number;
  n: number;
  z: number;
  metric: string;
  value: number;
  ci99: number;
  trials: number;
  seed: string;
}

export class MissingColumn extends Error {
  constructor(column: string) {
    super(`CSV is missing required column: ${column}`);
    this.name = "MissingColumn";
  }
}

export class EmptyFilter extends Error {
  constructor(detail: string) {
    super(`no rows match the figure filter: ${detail}`);
    this.name = "EmptyFilter";
  }
}

export function parseSweepCsv(text: string): SweepRow[] {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new Error(`CSV parse error at row ${e.row}: ${e.message}`);
  }
  const fields = parsed.meta.fields ?? [];
  for (const col of REQUIRED_COLUMNS) {
    if (!fields.includes(col)) {
      throw new MissingColumn(col);
    }
  }
  return parsed.data.map((r) => ({
    point_id: r.point_id,
    param_name: r.param_name,
    param_value: r.param_value,
    snr_db: Number(r.snr_db),
    alpha: Number(r.alpha),
    p_pilot_db: Number(r.p_pilot_db),
    n: Number(r.n),
    z: Number(r.z),
    metric: r.metric,
    value: Number(r.value),
    ci99: Number(r.ci99),
    trials: Number(r.trials),
    seed: r.seed,
  }));
}

export function loadSweepCsv(path: string): SweepRow[] {
  return parseSweepCsv(fs.readFileSync(path, "utf8"));
}
