/** Contact-sheet export: compose a grid of server-rendered cells (canvas,
 * browser only) and embed the provenance record as a PNG tEXt chunk so the
 * exported file carries its own lineage. Chunk handling is plain byte work
 * and runs anywhere. */

export interface CellProvenance {
  direction_index: number | null;
  magnitude: number;
  lpips: number | null;
}

export interface SheetProvenance {
  inversion_id: string | null;
  image_id: number | null;
  magnitude: number;
  cells: CellProvenance[];
  exported_at: string;
}

const PNG_SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];
const PROVENANCE_KEYWORD = "provenance";

function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    crc ^= bytes[i];
    for (let bit = 0; bit < 8; bit++) {
      crc = (crc >>> 1) ^ (0xedb88320 & -(crc & 1));
    }
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function readU32(bytes: Uint8Array, offset: number): number {
  return (
    ((bytes[offset] << 24) |
      (bytes[offset + 1] << 16) |
      (bytes[offset + 2] << 8) |
      bytes[offset + 3]) >>>
    0
  );
}

function writeU32(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function isPng(bytes: Uint8Array): boolean {
  return PNG_SIGNATURE.every((b, i) => bytes[i] === b);
}

/** Insert a tEXt chunk carrying the provenance JSON just before IEND. */
export function embedProvenance(png: Uint8Array, provenance: SheetProvenance): Uint8Array {
  if (!isPng(png)) throw new Error("not a PNG stream");
  const encoder = new TextEncoder();
  const keyword = encoder.encode(PROVENANCE_KEYWORD);
  const text = encoder.encode(JSON.stringify(provenance));
  const data = new Uint8Array(keyword.length + 1 + text.length);
  data.set(keyword, 0);
  data[keyword.length] = 0;
  data.set(text, keyword.length + 1);

  const typeAndData = new Uint8Array(4 + data.length);
  typeAndData.set(encoder.encode("tEXt"), 0);
  typeAndData.set(data, 4);
  const chunk = new Uint8Array(4 + typeAndData.length + 4);
  chunk.set(writeU32(data.length), 0);
  chunk.set(typeAndData, 4);
  chunk.set(writeU32(crc32(typeAndData)), 4 + typeAndData.length);

  // locate IEND (last 12 bytes of a well-formed stream, but scan to be safe)
  let offset = 8;
  while (offset < png.length) {
    const length = readU32(png, offset);
    const type = String.fromCharCode(...png.slice(offset + 4, offset + 8));
    if (type === "IEND") break;
    offset += 12 + length;
  }
  const out = new Uint8Array(png.length + chunk.length);
  out.set(png.slice(0, offset), 0);
  out.set(chunk, offset);
  out.set(png.slice(offset), offset + chunk.length);
  return out;
}

/** Read back the embedded provenance record; null when absent. */
export function parseProvenance(png: Uint8Array): SheetProvenance | null {
  if (!isPng(png)) throw new Error("not a PNG stream");
  const decoder = new TextDecoder();
  let offset = 8;
  while (offset + 12 <= png.length) {
    const length = readU32(png, offset);
    const type = String.fromCharCode(...png.slice(offset + 4, offset + 8));
    if (type === "tEXt") {
      const data = png.slice(offset + 8, offset + 8 + length);
      const sep = data.indexOf(0);
      if (sep > 0 && decoder.decode(data.slice(0, sep)) === PROVENANCE_KEYWORD) {
        return JSON.parse(decoder.decode(data.slice(sep + 1))) as SheetProvenance;
      }
    }
    if (type === "IEND") break;
    offset += 12 + length;
  }
  return null;
}

export interface SheetCell {
  png: Uint8Array;
  label: string;
  provenance: CellProvenance;
}

/** Compose cells side by side on a canvas and export PNG bytes with the
 * provenance chunk attached. Browser-only (needs canvas + Image). */
export async function composeContactSheet(
  cells: SheetCell[],
  provenance: SheetProvenance,
  cellSize = 128,
): Promise<Uint8Array> {
  if (typeof document === "undefined") {
    throw new Error("contact-sheet composition needs a browser canvas");
  }
  const canvas = document.createElement("canvas");
  canvas.width = cellSize * cells.length;
  canvas.height = cellSize + 18;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < cells.length; i++) {
    const blob = new Blob([cells[i].png as BlobPart], { type: "image/png" });
    const bitmap = await createImageBitmap(blob);
    ctx.drawImage(bitmap, i * cellSize, 0, cellSize, cellSize);
    ctx.fillStyle = "#eee";
    ctx.font = "11px sans-serif";
    ctx.fillText(cells[i].label, i * cellSize + 4, cellSize + 13);
  }
  const pngBlob: Blob = await new Promise((resolve, reject) =>
    canvas.toBlob(
      (b) => (b ? resolve(b) : reject(new Error("canvas export failed"))),
      "image/png",
    ),
  );
  const bytes = new Uint8Array(await pngBlob.arrayBuffer());
  return embedProvenance(bytes, provenance);
}
