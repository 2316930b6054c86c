/** View model for the overlaid deferral-curve chart (SVG polylines). */

import type { ReliabilityResponse } from "./api.js";

export const CURVE_COLORS = ["#1565c0", "#e65100", "#2e7d32", "#6a1b9a", "#00838f"];

export interface CurvePoint {
  x: number;         // svg coordinate
  y: number;
  fraction: number;  // exactly as served
  accuracy: number;  // exactly as served
}

export interface CurveView {
  modelId: string;
  color: string;
  points: CurvePoint[];
  polyline: string;
}

export interface ChartGeometry {
  width: number;
  height: number;
  margin: number;
  yMin: number; // accuracy axis lower bound
}

export const DEFAULT_GEOMETRY: ChartGeometry = {
  width: 480,
  height: 300,
  margin: 36,
  yMin: 0.5,
};

export function curveView(
  curve: ReliabilityResponse,
  index: number,
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): CurveView {
  const spanX = geom.width - 2 * geom.margin;
  const spanY = geom.height - 2 * geom.margin;
  const points = curve.fractions.map((fraction, i) => {
    const accuracy = curve.accuracies[i];
    const x = geom.margin + fraction * spanX;
    const yNorm = (accuracy - geom.yMin) / (1 - geom.yMin);
    const y = geom.height - geom.margin - Math.max(0, Math.min(1, yNorm)) * spanY;
    return { x, y, fraction, accuracy };
  });
  return {
    modelId: curve.model_id,
    color: CURVE_COLORS[index % CURVE_COLORS.length],
    points,
    polyline: points.map((p) => `${p.x},${p.y}`).join(" "),
  };
}

/** Tooltip text shows the served values verbatim (no rounding of meaning:
 * fixed decimals for display only). */
export function pointLabel(p: CurvePoint): string {
  return `${(p.fraction * 100).toFixed(0)}% deferred: accuracy ${p.accuracy.toFixed(4)}`;
}
