/** Deterministic SVG rendering of figure data via the echarts SSR pipeline. */

import * as echarts from "echarts";

import { FigureData, Series, SeriesPoint } from "./recipe";

const WIDTH = 880;
const HEIGHT = 560;
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/** Log axes cannot show zeros; clamp to one decade under the smallest positive value. */
export function logFloor(series: Series[]): number {
  let smallest = Infinity;
  for (const s of series) {
    for (const p of s.points) {
      if (p.y > 0 && p.y < smallest) smallest = p.y;
    }
  }
  return Number.isFinite(smallest) ? smallest / 10 : 1e-12;
}

function clampLog(points: SeriesPoint[], floor: number): Array<[number, number]> {
  return points.map((p) => [p.x, Math.max(p.y, floor)]);
}

function whiskerData(points: SeriesPoint[], floor: number | null): number[][] {
  return points
    .filter((p) => p.ci99 > 0)
    .map((p) => {
      let lo = p.y - p.ci99;
      const hi = p.y + p.ci99;
      if (floor !== null) lo = Math.max(lo, floor);
      return [p.x, lo, hi];
    });
}

function whiskerSeries(name: string, color: string, data: number[][], yAxisIndex: number) {
  return {
    type: "custom" as const,
    name: `${name} ci99`,
    yAxisIndex,
    silent: true,
    data,
    renderItem: (_params: unknown, api: any) => {
      const x = api.value(0);
      const lo = api.coord([x, api.value(1)]);
      const hi = api.coord([x, api.value(2)]);
      const cap = 4;
      const style = { stroke: color, fill: "none" as const, lineWidth: 1 };
      return {
        type: "group",
        children: [
          { type: "line", shape: { x1: lo[0], y1: lo[1], x2: hi[0], y2: hi[1] }, style },
          { type: "line", shape: { x1: lo[0] - cap, y1: lo[1], x2: lo[0] + cap, y2: lo[1] }, style },
          { type: "line", shape: { x1: hi[0] - cap, y1: hi[1], x2: hi[0] + cap, y2: hi[1] }, style },
        ],
      };
    },
  };
}

export function renderFigureSvg(data: FigureData): string {
  const chart = echarts.init(null as any, undefined, {
    renderer: "svg",
    ssr: true,
    width: WIDTH,
    height: HEIGHT,
  });

  const floor = data.logY ? logFloor(data.series) : null;
  const series: any[] = [];
  data.series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    series.push({
      type: "line",
      name: s.label,
      yAxisIndex: 0,
      symbol: "circle",
      symbolSize: 6,
      lineStyle: { color, width: 2 },
      itemStyle: { color },
      data: floor === null ? s.points.map((p) => [p.x, p.y]) : clampLog(s.points, floor),
    });
    const wd = whiskerData(s.points, floor);
    if (wd.length > 0) {
      series.push(whiskerSeries(s.label, color, wd, 0));
    }
  });

  const yAxes: any[] = [
    {
      type: data.logY ? "log" : "value",
      name: data.yLabel,
      nameLocation: "middle",
      nameGap: 55,
      splitLine: { show: true },
    },
  ];

  if (data.series2) {
    const floor2 = logFloor(data.series2);
    yAxes.push({
      type: "log",
      name: data.y2Label ?? "",
      nameLocation: "middle",
      nameGap: 55,
      splitLine: { show: false },
    });
    data.series2.forEach((s, i) => {
      const color = PALETTE[(data.series.length + i) % PALETTE.length];
      series.push({
        type: "line",
        name: s.label,
        yAxisIndex: 1,
        symbol: "diamond",
        symbolSize: 7,
        lineStyle: { color, width: 2, type: "dashed" },
        itemStyle: { color },
        data: clampLog(s.points, floor2),
      });
    });
  }

  if (data.kneeX !== undefined) {
    series.push({
      type: "line",
      name: `knee ${data.kneeX} dB`,
      yAxisIndex: 0,
      data: [],
      markLine: {
        symbol: "none",
        silent: true,
        lineStyle: { color: "#555", type: "dotted", width: 1.5 },
        label: { formatter: `knee ${data.kneeX} dB`, position: "insideEndTop" },
        data: [{ xAxis: data.kneeX }],
      },
    });
  }

  chart.setOption({
    animation: false,
    backgroundColor: "#ffffff",
    title: { text: data.title, left: "center", textStyle: { fontSize: 16 } },
    legend: { bottom: 0, type: "plain" },
    grid: { left: 80, right: data.series2 ? 80 : 30, top: 50, bottom: 60 },
    xAxis: {
      type: "value",
      name: data.xLabel,
      nameLocation: "middle",
      nameGap: 28,
    },
    yAxis: yAxes,
    series,
  });

  const svg = chart.renderToSVGString();
  chart.dispose();
  return svg;
}
