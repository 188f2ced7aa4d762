/** Session state for one review sitting.
 *
 * The server is the single source of truth: direction statuses held here
 * are whatever the last /directions response said, and every curation
 * action round-trips before the card re-renders.
 */

import type { DirectionInfo, ServiceConfig } from "./api.js";

export interface SessionState {
  selectedImageId: number | null;
  inversionId: string | null;
  selectedDirection: number | null;
  magnitude: number;
  directions: DirectionInfo[];
  config: ServiceConfig | null;
  lastGoodImage: Uint8Array | null;
  lastLpips: number | null;
}

export function initialState(): SessionState {
  return {
    selectedImageId: null,
    inversionId: null,
    selectedDirection: null,
    magnitude: 0,
    directions: [],
    config: null,
    lastGoodImage: null,
    lastLpips: null,
  };
}

/** Slider values stay inside +/- max_magnitude of the active plan scale. */
export function clampMagnitude(state: SessionState, value: number): number {
  const bound = state.config?.max_magnitude ?? 4.0;
  return Math.min(bound, Math.max(-bound, value));
}

export function relevantDirections(directions: DirectionInfo[]): DirectionInfo[] {
  return directions.filter((d) => d.status === "relevant");
}

/** The augmentation plan builder stays disabled until review produced
 * at least one relevant direction. */
export function canBuildPlan(directions: DirectionInfo[]): boolean {
  return relevantDirections(directions).length > 0;
}

/** LPIPS badge turns red above the plan threshold (wayward edit). */
export function lpipsBadge(
  lpips: number | null,
  config: ServiceConfig | null,
): { text: string; wayward: boolean } {
  if (lpips === null || Number.isNaN(lpips)) return { text: "-", wayward: false };
  const threshold = config?.lpips_threshold ?? 0.2;
  return { text: lpips.toFixed(4), wayward: lpips > threshold };
}

export function applyDirections(
  state: SessionState,
  directions: DirectionInfo[],
): SessionState {
  return { ...state, directions };
}

export function selectImage(
  state: SessionState,
  imageId: number,
  inversionId: string,
): SessionState {
  return {
    ...state,
    selectedImageId: imageId,
    inversionId,
    magnitude: 0,
    lastGoodImage: null,
    lastLpips: null,
  };
}
