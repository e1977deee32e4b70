export interface SessionInfo {
  session_id: number;
  geometry: {
    side_length: number;
    layer_thickness: number;
    channel_width?: number;
  };
  tick_hz: number;
  classifier: boolean;
}

export interface GesturePayload {
  label: string;
  probs: number[] | null;
}

export interface ActionPayload {
  kind: string;
  source_gesture: string;
  confidence: number;
}

/** One NDJSON line from the per-tick stream. */
export interface StreamMessage {
  seq: number;
  dv: number[];
  img: string; // base64 of 2304 bytes, row-major, min-max normalized
  gesture: GesturePayload;
  action: ActionPayload;
}

export type TouchEventKind = "down" | "move" | "up";

export interface TouchEventMessage {
  id: number;
  event: TouchEventKind;
  position?: [number, number]; // sensor mm
  depth?: number; // mm
}

export const GESTURE_LABELS = [
  "no-contact",
  "finger-press",
  "four-finger-scratch",
  "fist-press",
  "finger-double-tap",
  "palm-pat",
  "swipe-up",
  "swipe-down",
  "swipe-left",
  "swipe-right",
  "zoom-in",
  "zoom-out",
];
