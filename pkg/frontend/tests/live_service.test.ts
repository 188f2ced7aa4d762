/** Contract tests against the live fixture service (spawned in global
 * setup with untrained toy artifacts). These pin the behaviors the
 * dashboard depends on: deterministic zero-magnitude reconstructions,
 * durable curation, and the inversion/edit protocol. */

import { beforeAll, describe, expect, inject, it } from "vitest";

import { ApiError, ExplorerApi } from "../src/api.js";
import { buildCard } from "../src/cards.js";
import { debounce, LatestOnlySender } from "../src/debounce.js";
import { embedProvenance, parseProvenance } from "../src/contact_sheet.js";
import { canBuildPlan } from "../src/state.js";

const baseUrl = inject("baseUrl");
const api = new ExplorerApi(baseUrl);

let inversionId: string;

beforeAll(async () => {
  const images = await api.listImages("train");
  expect(images.length).toBeGreaterThan(0);
  const inversion = await api.invert(images[0].id, 2);
  inversionId = inversion.inversion_id;
});

describe("service protocol", () => {
  it("reports a sane configuration", async () => {
    const config = await api.config();
    expect(config.resolution).toBe(32);
    expect(config.n_directions).toBeGreaterThan(0);
    expect(config.max_magnitude).toBeGreaterThan(0);
  });

  it("slider at zero renders the byte-identical reconstruction", async () => {
    const first = await api.edit({
      inversion_id: inversionId,
      direction_index: 0,
      magnitude: 0,
    });
    const second = await api.edit({
      inversion_id: inversionId,
      direction_index: 0,
      magnitude: 0,
    });
    expect(first.lpips).toBe(0);
    expect(Buffer.from(first.png).equals(Buffer.from(second.png))).toBe(true);
    // a different direction at magnitude 0 is still the same reconstruction
    const otherDirection = await api.edit({
      inversion_id: inversionId,
      direction_index: 1,
      magnitude: 0,
    });
    expect(Buffer.from(otherDirection.png).equals(Buffer.from(first.png))).toBe(true);
  });

  it("nonzero magnitudes change the image and report a distance", async () => {
    const zero = await api.edit({
      inversion_id: inversionId,
      direction_index: 0,
      magnitude: 0,
    });
    const moved = await api.edit({
      inversion_id: inversionId,
      direction_index: 0,
      magnitude: 3,
    });
    expect(Buffer.from(moved.png).equals(Buffer.from(zero.png))).toBe(false);
    expect(moved.lpips).toBeGreaterThan(0);
  });

  it("uploading a PNG body also inverts", async () => {
    const images = await api.listImages("train");
    const response = await fetch(api.imageUrl(images[1].id));
    const png = new Uint8Array(await response.arrayBuffer());
    const inversion = await api.invertUpload(png, 1);
    expect(inversion.source).toBe("upload");
    expect(inversion.loss_trace.length).toBe(2);
  });
});

describe("curation", () => {
  it("decisions survive a reload (fresh client, server truth)", async () => {
    await api.curate({ index: 6, status: "relevant", name: "SV" });
    const reloaded = new ExplorerApi(baseUrl);
    const directions = await reloaded.directions();
    const six = directions.find((d) => d.index === 6);
    expect(six?.status).toBe("relevant");
    expect(six?.name).toBe("SV");
  });

  it("plan builder enables only once something is relevant", async () => {
    const directions = await api.directions();
    expect(canBuildPlan(directions)).toBe(true); // direction 6 above
    const hypothetical = directions.map((d) =>
      d.index === 6 ? { ...d, status: "rejected" as const } : d,
    );
    expect(canBuildPlan(hypothetical)).toBe(false);
  });

  it("marking duplicate of a non-relevant direction is a 4xx", async () => {
    await api.curate({ index: 5, status: "rejected" });
    await expect(
      api.curate({ index: 4, status: "duplicate", duplicate_of: 5 }),
    ).rejects.toMatchObject({ status: 409 });
    await expect(
      api.curate({ index: 4, status: "duplicate", duplicate_of: 5 }),
    ).rejects.toBeInstanceOf(ApiError);
  });
});

describe("direction cards over the live API", () => {
  it("builds a five-thumbnail strip whose center is the reconstruction", async () => {
    const directions = await api.directions();
    const card = await buildCard(api, directions[0], inversionId, 4, 32);
    expect(card.thumbnails.map((t) => t.magnitude)).toEqual([-4, -2, 0, 2, 4]);
    const center = card.thumbnails[2];
    expect(center.lpips).toBe(0);
    const recon = await api.edit({
      inversion_id: inversionId,
      direction_index: card.index,
      magnitude: 0,
      size: 32,
    });
    expect(Buffer.from(center.png).equals(Buffer.from(recon.png))).toBe(true);
  });

  it("edited cells embed parseable provenance", async () => {
    const cell = await api.edit({
      inversion_id: inversionId,
      direction_index: 2,
      magnitude: 1.5,
      size: 32,
    });
    const stamped = embedProvenance(cell.png, {
      inversion_id: inversionId,
      image_id: 0,
      magnitude: 1.5,
      cells: [{ direction_index: 2, magnitude: 1.5, lpips: cell.lpips }],
      exported_at: new Date().toISOString(),
    });
    const parsed = parseProvenance(stamped);
    expect(parsed?.cells[0].direction_index).toBe(2);
    expect(parsed?.inversion_id).toBe(inversionId);
  });
});

describe("debounced live editing", () => {
  it("a continuous drag issues at most one request per 150ms", async () => {
    const sender = new LatestOnlySender<number, unknown>((magnitude, signal) =>
      api.edit(
        { inversion_id: inversionId, direction_index: 0, magnitude },
        signal,
      ),
    );
    const slider = debounce<number>((value) => void sender.dispatch(value), 150);

    const dragMs = 600;
    const stepMs = 25;
    for (let t = 0; t < dragMs; t += stepMs) {
      slider.call(-4 + (8 * t) / dragMs);
      await new Promise((r) => setTimeout(r, stepMs));
    }
    await new Promise((r) => setTimeout(r, 300)); // settle
    expect(sender.requestCount).toBeGreaterThan(0);
    expect(sender.requestCount).toBeLessThanOrEqual(Math.ceil(dragMs / 150) + 1);
  });
});
