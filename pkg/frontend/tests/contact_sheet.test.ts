import { describe, expect, it } from "vitest";

import { embedProvenance, parseProvenance } from "../src/contact_sheet.js";

// smallest valid PNG: 1x1 transparent pixel
const TINY_PNG = Uint8Array.from(
  atob(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk" +
      "YPhfDwAChwGA60e6kgAAAABJRU5ErkJggg==",
  ),
  (c) => c.charCodeAt(0),
);

const provenance = {
  inversion_id: "inv-0001",
  image_id: 3,
  magnitude: 2.5,
  cells: [
    { direction_index: null, magnitude: 0, lpips: 0 },
    { direction_index: 4, magnitude: 2.5, lpips: 0.0812 },
  ],
  exported_at: "2026-08-08T00:00:00Z",
};

describe("provenance embedding", () => {
  it("round-trips through the PNG tEXt chunk", () => {
    const stamped = embedProvenance(TINY_PNG, provenance);
    expect(stamped.length).toBeGreaterThan(TINY_PNG.length);
    const parsed = parseProvenance(stamped);
    expect(parsed).toEqual(provenance);
  });

  it("keeps the PNG signature and trailer intact", () => {
    const stamped = embedProvenance(TINY_PNG, provenance);
    expect(Array.from(stamped.slice(0, 8))).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
    const trailer = String.fromCharCode(...stamped.slice(-8, -4));
    expect(trailer).toBe("IEND");
  });

  it("returns null for a PNG without the chunk", () => {
    expect(parseProvenance(TINY_PNG)).toBeNull();
  });

  it("rejects non-PNG bytes", () => {
    expect(() => embedProvenance(new Uint8Array([1, 2, 3]), provenance)).toThrow();
    expect(() => parseProvenance(new Uint8Array([1, 2, 3]))).toThrow();
  });
});
