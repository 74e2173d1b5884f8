// Wire types mirroring the gateway's published JSON schemas (/v1/schema).

export interface Box {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  confidence: number;
  class_id: number;
}

export interface DetectionSet {
  image_id: string;
  image_w: number;
  image_h: number;
  detector_name: string;
  conf_threshold: number;
  nms_threshold: number;
  boxes: Box[];
}

export interface Turn {
  index: number;
  user_text: string;
  system_text: string;
  scene_block: string;
  answer_text: string;
  model_name: string;
  latency_ms: number;
  token_usage: Record<string, number | null> | null;
}

export interface SessionCreated {
  session_id: string;
  turn0: Turn;
}

export interface Transcript {
  session_id: string;
  created_at: string;
  image: { id: string; w: number; h: number };
  detector_name: string;
  mode: Mode;
  template_version: string;
  scene_block_every_turn: boolean;
  detections: DetectionSet;
  turns: Turn[];
}

export interface AnswerRegion {
  x_min: number | null;
  x_max: number | null;
  y_min: number | null;
  y_max: number | null;
  kind: "range" | "point";
  source_span: [number, number];
}

export interface GroundingScore {
  regions: number;
  boxes_covered: number;
  coverage: number;
  spurious_area_ratio: number;
  no_reference: boolean;
}

export interface GroundingReport {
  session_id: string;
  turn_index: number;
  regions: AnswerRegion[];
  score: GroundingScore;
}

export interface ApiErrorBody {
  error: { type: string; message: string };
}

export type Mode = "with_boxes" | "without_boxes";
