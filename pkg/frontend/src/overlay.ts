// Canvas overlay drawing. Everything is drawn at a display scale s so that
// an image pixel (x, y) lands at canvas pixel (s*x, s*y); the geometry
// test harness holds this to within 1 px.

import type { AnswerRegion, Box } from "./types";

export interface OverlayToggles {
  detections: boolean;
  regions: boolean;
}

// Structural subset of CanvasRenderingContext2D so tests can record calls.
export interface DrawingContext {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export const BOX_STROKE = "#ff2828";
export const REGION_FILL = "rgba(40, 120, 255, 0.25)";
export const REGION_STROKE = "rgba(40, 120, 255, 0.8)";

export function displayScale(imageW: number, imageH: number, maxW: number, maxH: number): number {
  if (imageW <= 0 || imageH <= 0) return 1;
  return Math.min(maxW / imageW, maxH / imageH, 1);
}

export function drawBoxes(ctx: DrawingContext, boxes: Box[], scale: number): void {
  ctx.strokeStyle = BOX_STROKE;
  ctx.fillStyle = BOX_STROKE;
  ctx.lineWidth = 2;
  ctx.font = "12px sans-serif";
  for (const b of boxes) {
    const x = b.x1 * scale;
    const y = b.y1 * scale;
    ctx.strokeRect(x, y, (b.x2 - b.x1) * scale, (b.y2 - b.y1) * scale);
    ctx.fillText(b.confidence.toFixed(2), x + 2, Math.max(y - 4, 10));
  }
}

export function drawRegions(
  ctx: DrawingContext,
  regions: AnswerRegion[],
  scale: number,
  imageW: number,
  imageH: number,
): void {
  ctx.fillStyle = REGION_FILL;
  ctx.strokeStyle = REGION_STROKE;
  ctx.lineWidth = 2;
  for (const r of regions) {
    const x0 = (r.x_min ?? 0) * scale;
    const x1 = (r.x_max ?? imageW) * scale;
    const y0 = (r.y_min ?? 0) * scale;
    const y1 = (r.y_max ?? imageH) * scale;
    if (r.kind === "point") {
      const size = 8;
      ctx.fillRect(x0 - size / 2, y0 - size / 2, size, size);
    } else {
      ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    }
  }
}

export function drawOverlay(
  ctx: DrawingContext,
  imageW: number,
  imageH: number,
  scale: number,
  boxes: Box[],
  regions: AnswerRegion[],
  toggles: OverlayToggles,
): void {
  ctx.clearRect(0, 0, imageW * scale, imageH * scale);
  if (toggles.regions) drawRegions(ctx, regions, scale, imageW, imageH);
  if (toggles.detections) drawBoxes(ctx, boxes, scale);
}
