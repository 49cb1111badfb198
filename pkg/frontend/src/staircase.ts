/**
 * Staircase history chart: step-line of tested levels against trial
 * index, outcome-coded markers, and an optional quantile band taken
 * straight from the service's Fieller interval.
 */

import type { Estimate, Trial } from "./api.js";
import { formatLevel } from "./format.js";

export interface StaircaseStep {
  fromTrial: number;
  fromLevel: number;
  toTrial: number;
  toLevel: number;
}

export interface StaircaseBand {
  gammaHat: number;
  lower: number;
  upper: number;
}

export interface StaircaseState {
  points: Trial[];
  steps: StaircaseStep[];
  band: StaircaseBand | null;
}

export function staircaseState(
  trials: readonly Trial[],
  estimate?: Estimate | null,
): StaircaseState {
  const points = [...trials];
  const steps: StaircaseStep[] = [];
  let prev: Trial | undefined;
  for (const t of points) {
    if (prev) {
      steps.push({
        fromTrial: prev.index,
        fromLevel: prev.x,
        toTrial: t.index,
        toLevel: t.x,
      });
    }
    prev = t;
  }
  let band: StaircaseBand | null = null;
  if (
    estimate &&
    estimate.estimable &&
    estimate.fieller.kind === "interval" &&
    estimate.fieller.lower !== null &&
    estimate.fieller.upper !== null
  ) {
    band = {
      gammaHat: estimate.gamma_hat,
      lower: estimate.fieller.lower,
      upper: estimate.fieller.upper,
    };
  }
  return { points, steps, band };
}

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 260;
const MARGIN = { left: 50, right: 14, top: 12, bottom: 26 };

function make(
  tag: string,
  attrs: Record<string, string | number>,
): SVGElement {
  const el = document.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [k, v] of Object.entries(attrs)) {
    el.setAttribute(k, String(v));
  }
  return el;
}

export function renderStaircase(svg: SVGElement, state: StaircaseState): void {
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.textContent = "";
  if (state.points.length === 0) return;

  const innerW = WIDTH - MARGIN.left - MARGIN.right;
  const innerH = HEIGHT - MARGIN.top - MARGIN.bottom;

  const levels = state.points.map((p) => p.x);
  if (state.band) levels.push(state.band.lower, state.band.upper);
  let lo = Math.min(...levels);
  let hi = Math.max(...levels);
  if (hi === lo) {
    lo -= 1;
    hi += 1;
  } else {
    const pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  const first = state.points[0]!.index;
  const last = state.points[state.points.length - 1]!.index;
  const x = (trial: number) =>
    MARGIN.left + (last === first ? 0.5 : (trial - first) / (last - first)) * innerW;
  const y = (level: number) => MARGIN.top + (1 - (level - lo) / (hi - lo)) * innerH;

  // band underneath everything else so markers stay readable
  if (state.band) {
    svg.appendChild(
      make("rect", {
        class: "fieller-band",
        x: MARGIN.left,
        width: innerW,
        y: y(state.band.upper),
        height: Math.max(0, y(state.band.lower) - y(state.band.upper)),
      }),
    );
    svg.appendChild(
      make("line", {
        class: "gamma-line",
        x1: MARGIN.left,
        x2: MARGIN.left + innerW,
        y1: y(state.band.gammaHat),
        y2: y(state.band.gammaHat),
      }),
    );
  }

  const p0 = state.points[0]!;
  let d = `M ${x(p0.index)} ${y(p0.x)}`;
  for (const s of state.steps) {
    d += ` H ${x(s.toTrial)} V ${y(s.toLevel)}`;
  }
  svg.appendChild(make("path", { class: "staircase-line", d, fill: "none" }));

  for (const p of state.points) {
    const marker = make("circle", {
      class: `marker ${p.y === 1 ? "explode" : "no-explode"}`,
      cx: x(p.index),
      cy: y(p.x),
      r: 5,
      "data-trial": p.index,
      "data-level": p.x,
    });
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `trial ${p.index}: ${p.y === 1 ? "explode" : "no explode"} at ${formatLevel(p.x)}`;
    marker.appendChild(title);
    svg.appendChild(marker);
  }

  const axisLo = make("text", { class: "axis-label", x: 4, y: y(lo) });
  axisLo.textContent = formatLevel(lo);
  const axisHi = make("text", { class: "axis-label", x: 4, y: y(hi) + 10 });
  axisHi.textContent = formatLevel(hi);
  const axisTrial = make("text", {
    class: "axis-label",
    x: x(last),
    y: HEIGHT - 6,
    "text-anchor": "end",
  });
  axisTrial.textContent = `trial ${last}`;
  svg.appendChild(axisLo);
  svg.appendChild(axisHi);
  svg.appendChild(axisTrial);
}
