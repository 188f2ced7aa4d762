/** Direction card view models: one card per factorized direction with a
 * five-point thumbnail strip. The magnitude-0 thumbnail is the unedited
 * reconstruction by server contract. */

import type { DirectionInfo, EditResult, ExplorerApi } from "./api.js";

export interface DirectionCard {
  index: number;
  singularValue: number;
  rankScore: number | null;
  status: DirectionInfo["status"];
  name: string | null;
  duplicateOf: number | null;
  thumbnails: { magnitude: number; png: Uint8Array; lpips: number }[];
}

export function thumbnailMagnitudes(maxMagnitude: number): number[] {
  return [-maxMagnitude, -maxMagnitude / 2, 0, maxMagnitude / 2, maxMagnitude];
}

/** Cards are ordered by rank score descending (unranked directions last,
 * by singular value). */
export function orderCards<T extends { rankScore: number | null; singularValue: number }>(
  cards: T[],
): T[] {
  return [...cards].sort((a, b) => {
    if (a.rankScore === null && b.rankScore === null) {
      return b.singularValue - a.singularValue;
    }
    if (a.rankScore === null) return 1;
    if (b.rankScore === null) return -1;
    return b.rankScore - a.rankScore;
  });
}

export async function buildCard(
  api: ExplorerApi,
  info: DirectionInfo,
  inversionId: string,
  maxMagnitude: number,
  thumbnailSize = 128,
): Promise<DirectionCard> {
  const thumbnails = [];
  for (const magnitude of thumbnailMagnitudes(maxMagnitude)) {
    const result: EditResult = await api.edit({
      inversion_id: inversionId,
      direction_index: info.index,
      magnitude,
      size: thumbnailSize,
    });
    thumbnails.push({ magnitude, png: result.png, lpips: result.lpips });
  }
  return {
    index: info.index,
    singularValue: info.singular_value,
    rankScore: info.rank_score,
    status: info.status,
    name: info.name,
    duplicateOf: info.duplicate_of,
    thumbnails,
  };
}
