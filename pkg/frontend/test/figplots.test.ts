import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { describe, expect, it } from "vitest";

import { EmptyFilter, MissingColumn, parseSweepCsv } from "../src/csv";
import { FIGURE_KINDS, FigureKind, figureData, kneeOf } from "../src/recipe";
import { logFloor, renderFigureSvg } from "../src/render";
import { renderToString } from "../src/index";

const REFERENCE = path.join(__dirname, "..", "testdata", "reference.csv");
const refText = fs.readFileSync(REFERENCE, "utf8");

describe("csv parsing", () => {
  it("parses the reference CSV with typed columns", () => {
    const rows = parseSweepCsv(refText);
    expect(rows.length).toBeGreaterThan(300);
    const r = rows[0];
    expect(typeof r.snr_db).toBe("number");
    expect(typeof r.metric).toBe("string");
    expect(r.trials).toBeGreaterThan(0);
  });

  it("raises MissingColumn when the header is short", () => {
    const bad = "point_id,metric,value\np0,pmd,0.1\n";
    expect(() => parseSweepCsv(bad)).toThrow(MissingColumn);
  });

  it("handles quoted multi-valued param fields", () => {
    const rows = parseSweepCsv(refText);
    const multi = rows.find((r) => r.param_name.includes(","));
    expect(multi).toBeDefined();
    expect(multi!.param_value.split(",").length).toBe(2);
  });
});

describe("figure data", () => {
  const rows = parseSweepCsv(refText);

  it("pmd groups by alpha with log y", () => {
    const d = figureData("pmd", rows);
    expect(d.logY).toBe(true);
    expect(d.series.map((s) => s.label)).toEqual([
      "alpha = 0.25",
      "alpha = 0.5",
      "alpha = 1",
    ]);
    for (const s of d.series) {
      const xs = s.points.map((p) => p.x);
      expect(xs).toEqual([...xs].sort((a, b) => a - b));
    }
  });

  it("pmd curves decrease with SNR and order by alpha at high SNR", () => {
    const d = figureData("pmd", rows);
    for (const s of d.series) {
      const first = s.points[0].y;
      const last = s.points[s.points.length - 1].y;
      expect(last).toBeLessThan(first);
    }
    const at25 = (label: string) =>
      d.series.find((s) => s.label === label)!.points.at(-1)!.y;
    expect(at25("alpha = 1")).toBeLessThan(at25("alpha = 0.25"));
  });

  it("sumrate groups by N and increases with N at fixed Z", () => {
    const d = figureData("sumrate", rows);
    expect(d.series.map((s) => s.label)).toEqual(["N = 128", "N = 256", "N = 512"]);
    const at = (label: string, z: number) =>
      d.series.find((s) => s.label === label)!.points.find((p) => p.x === z)!.y;
    expect(at("N = 512", 6)).toBeGreaterThan(at("N = 256", 6));
    expect(at("N = 256", 6)).toBeGreaterThan(at("N = 128", 6));
  });

  it("eta pivots per point and finds a knee", () => {
    const d = figureData("eta", rows);
    expect(d.series[0].points.length).toBe(9);
    expect(d.series2![0].points.length).toBe(9);
    expect(d.kneeX).toBeDefined();
    expect(d.kneeX!).toBeLessThanOrEqual(24);
  });

  it("raises EmptyFilter when the metric is absent", () => {
    const none = rows.filter((r) => r.metric === "does_not_exist");
    expect(() => figureData("pmd", none)).toThrow(EmptyFilter);
  });

  it("kneeOf returns undefined for flat curves", () => {
    const flat = [0, 3, 6, 9].map((x) => ({ x, y: 1.0, ci99: 0 }));
    expect(kneeOf(flat)).toBeUndefined();
  });
});

describe("rendering", () => {
  const rows = parseSweepCsv(refText);

  it("renders every figure family to SVG", () => {
    for (const kind of FIGURE_KINDS) {
      const svg = renderToString(kind as FigureKind, REFERENCE);
      expect(svg.startsWith("<svg")).toBe(true);
      expect(svg).toContain("</svg>");
      expect(svg.length).toBeGreaterThan(2000);
    }
  });

  it("clamps zeros on log axes to a positive floor", () => {
    const d = figureData("rmse", rows);
    const floor = logFloor(d.series);
    expect(floor).toBeGreaterThan(0);
    const svg = renderFigureSvg(d);
    expect(svg).toContain("RMSE");
  });

  it("draws confidence whiskers for probability figures", () => {
    const d = figureData("pmd", rows);
    const withCi = d.series.some((s) => s.points.some((p) => p.ci99 > 0));
    expect(withCi).toBe(true);
  });

  it("annotates the eta knee", () => {
    const d = figureData("eta", rows);
    const svg = renderFigureSvg(d);
    expect(svg).toContain("knee");
  });
});

describe("cli", () => {
  const cliJs = path.join(__dirname, "..", "dist", "cli.js");

  it("renders bit-identical SVG files on rerun", () => {
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "figplots-"));
    const outs: Buffer[] = [];
    for (const run of [0, 1]) {
      const out = path.join(tmp, `pmd-${run}.svg`);
      execFileSync("node", [cliJs, "--csv", REFERENCE, "--figure", "pmd", "--out", out]);
      outs.push(fs.readFileSync(out));
    }
    expect(outs[0].equals(outs[1])).toBe(true);
  });

  it("renders all five families without error", () => {
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "figplots-all-"));
    for (const kind of FIGURE_KINDS) {
      const out = path.join(tmp, `${kind}.svg`);
      execFileSync("node", [cliJs, "--csv", REFERENCE, "--figure", kind, "--out", out]);
      expect(fs.statSync(out).size).toBeGreaterThan(2000);
    }
  });

  it("fails cleanly on a bad figure name", () => {
    expect(() =>
      execFileSync("node", [cliJs, "--csv", REFERENCE, "--figure", "nope", "--out", "/tmp/x.svg"], {
        stdio: "pipe",
      }),
    ).toThrow();
  });
});
