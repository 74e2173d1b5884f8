// Canned gateway responses matching the server's wire schemas.

import type { GroundingReport, Transcript, Turn } from "../src/types";

export const SYSTEM_TEXT =
  "You are a maritime analysis assistant working with synthetic aperture radar (SAR) imagery.";

export const SCENE_BLOCK =
  'Ship detections from "file" (coordinates in pixels, origin top-left):\n' +
  "Image size: 500x375 px.\n2 ships detected.\n" +
  "Ship 1: bbox=(10,20,50,60), size=(40 x 40) px, confidence=0.97\n" +
  "Ship 2: bbox=(100,120,180,200), size=(80 x 80) px, confidence=0.62";

export function makeTurn(index: number, overrides: Partial<Turn> = {}): Turn {
  return {
    index,
    user_text: `question ${index}`,
    system_text: SYSTEM_TEXT,
    scene_block: SCENE_BLOCK,
    answer_text: `answer ${index}`,
    model_name: "mock-vlm",
    latency_ms: 250,
    token_usage: null,
    ...overrides,
  };
}

export function makeTranscript(mode: Transcript["mode"], turns: Turn[]): Transcript {
  return {
    session_id: "sess0000",
    created_at: "2026-01-15T12:00:00Z",
    image: { id: "s1", w: 500, h: 375 },
    detector_name: "file",
    mode,
    template_version: "v1",
    scene_block_every_turn: true,
    detections: {
      image_id: "s1",
      image_w: 500,
      image_h: 375,
      detector_name: "file",
      conf_threshold: 0.0,
      nms_threshold: 0.45,
      boxes: [
        { x1: 10, y1: 20, x2: 50, y2: 60, confidence: 0.97, class_id: 0 },
        { x1: 100, y1: 120, x2: 180, y2: 200, confidence: 0.62, class_id: 0 },
      ],
    },
    turns,
  };
}

export const GROUNDING_REPORT: GroundingReport = {
  session_id: "sess0000",
  turn_index: 1,
  regions: [
    { x_min: 100, x_max: 180, y_min: 120, y_max: 200, kind: "range", source_span: [36, 62] },
  ],
  score: {
    regions: 1,
    boxes_covered: 1,
    coverage: 0.5,
    spurious_area_ratio: 0,
    no_reference: false,
  },
};
