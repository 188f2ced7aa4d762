import { describe, expect, it } from "vitest";

import type { DirectionInfo, ServiceConfig } from "../src/api.js";
import { orderCards, thumbnailMagnitudes } from "../src/cards.js";
import {
  canBuildPlan,
  clampMagnitude,
  initialState,
  lpipsBadge,
  relevantDirections,
  selectImage,
} from "../src/state.js";

function direction(index: number, status: DirectionInfo["status"]): DirectionInfo {
  return {
    index,
    singular_value: 1.0 - index * 0.1,
    degenerate: false,
    status,
    name: null,
    duplicate_of: null,
    rank_score: null,
  };
}

const config: ServiceConfig = {
  resolution: 32,
  latent_dim: 8,
  num_style_inputs: 11,
  n_directions: 8,
  lpips_threshold: 0.2,
  max_magnitude: 4,
};

describe("plan builder gating", () => {
  it("is disabled while nothing is relevant", () => {
    const directions = [direction(0, "unreviewed"), direction(1, "rejected")];
    expect(canBuildPlan(directions)).toBe(false);
  });

  it("enables once a direction is marked relevant", () => {
    const directions = [direction(0, "unreviewed"), direction(1, "relevant")];
    expect(canBuildPlan(directions)).toBe(true);
    expect(relevantDirections(directions).map((d) => d.index)).toEqual([1]);
  });

  it("duplicates and rejections alone never enable it", () => {
    const directions = [direction(0, "duplicate"), direction(1, "rejected")];
    expect(canBuildPlan(directions)).toBe(false);
  });
});

describe("magnitude handling", () => {
  it("clamps the slider to the configured plan scale", () => {
    const state = { ...initialState(), config };
    expect(clampMagnitude(state, 9)).toBe(4);
    expect(clampMagnitude(state, -9)).toBe(-4);
    expect(clampMagnitude(state, 1.5)).toBe(1.5);
  });

  it("selecting a new image resets the sweep to zero", () => {
    let state: Parameters<typeof selectImage>[0] = { ...initialState(), config, magnitude: 3.2 };
    state = selectImage(state, 5, "inv-0001");
    expect(state.magnitude).toBe(0);
    expect(state.inversionId).toBe("inv-0001");
    expect(state.lastGoodImage).toBeNull();
  });
});

describe("lpips badge", () => {
  it("flags scores above the threshold as wayward", () => {
    expect(lpipsBadge(0.15, config).wayward).toBe(false);
    expect(lpipsBadge(0.25, config).wayward).toBe(true);
    expect(lpipsBadge(null, config).text).toBe("-");
  });
});

describe("direction cards", () => {
  it("thumbnail strip covers -a..a including the exact reconstruction", () => {
    expect(thumbnailMagnitudes(4)).toEqual([-4, -2, 0, 2, 4]);
  });

  it("orders by rank score descending, unranked last", () => {
    const cards = [
      { index: 0, rankScore: 0.2, singularValue: 3 },
      { index: 1, rankScore: null, singularValue: 9 },
      { index: 2, rankScore: 0.9, singularValue: 1 },
    ];
    expect(orderCards(cards).map((c) => c.index)).toEqual([2, 0, 1]);
  });
});
