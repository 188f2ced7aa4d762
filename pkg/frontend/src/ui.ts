/** DOM wiring for the explorer dashboard.
 *
 * Pure logic (debounce, gating, card ordering, provenance) lives in the
 * sibling modules where it is unit-tested; this file only renders and
 * forwards events. Every displayed image is a server response.
 */

import { ApiError, ExplorerApi } from "./api.js";
import type { DirectionInfo, EditResult } from "./api.js";
import { buildCard, orderCards } from "./cards.js";
import { composeContactSheet, type SheetCell } from "./contact_sheet.js";
import { debounce, LatestOnlySender } from "./debounce.js";
import {
  canBuildPlan,
  clampMagnitude,
  initialState,
  lpipsBadge,
  relevantDirections,
  selectImage,
  type SessionState,
} from "./state.js";

const DEBOUNCE_MS = 150;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pngUrl(bytes: Uint8Array): string {
  return URL.createObjectURL(new Blob([bytes as BlobPart], { type: "image/png" }));
}

export class ExplorerApp {
  private state: SessionState = initialState();
  private sender: LatestOnlySender<number, EditResult>;
  private slider = debounce<number>((value) => void this.requestEdit(value), DEBOUNCE_MS);

  constructor(
    private api: ExplorerApi,
    private root: HTMLElement,
  ) {
    this.sender = new LatestOnlySender((magnitude, signal) =>
      this.api.edit(
        {
          inversion_id: this.state.inversionId ?? undefined,
          direction_index: this.state.selectedDirection ?? 0,
          magnitude,
        },
        signal,
      ),
    );
  }

  async start(): Promise<void> {
    this.state.config = await this.api.config();
    this.state.directions = await this.api.directions(true);
    this.render();
  }

  private toast(message: string): void {
    const box = this.root.querySelector(".toasts") as HTMLElement;
    const note = el("div", "toast", message);
    box.appendChild(note);
    setTimeout(() => note.remove(), 4000);
  }

  private async requestEdit(magnitude: number): Promise<void> {
    if (!this.state.inversionId || this.state.selectedDirection === null) return;
    try {
      const outcome = await this.sender.dispatch(magnitude);
      if (outcome.superseded || !outcome.value) return;
      this.state.lastGoodImage = outcome.value.png;
      this.state.lastLpips = outcome.value.lpips;
      this.renderViewer();
    } catch (err) {
      // keep the last good image on screen; surface a non-blocking note
      this.toast(err instanceof ApiError ? err.detail : String(err));
    }
  }

  private async onPickImage(imageId: number): Promise<void> {
    try {
      const inversion = await this.api.invert(imageId);
      this.state = selectImage(this.state, imageId, inversion.inversion_id);
      this.slider.cancel();
      await this.requestEdit(0);
      this.render();
    } catch (err) {
      this.toast(err instanceof ApiError ? err.detail : String(err));
    }
  }

  private async onCurate(
    direction: DirectionInfo,
    status: string,
    name?: string,
    duplicateOf?: number,
  ): Promise<void> {
    try {
      await this.api.curate({
        index: direction.index,
        status,
        name: name ?? direction.name,
        duplicate_of: duplicateOf ?? null,
      });
    } catch (err) {
      this.toast(err instanceof ApiError ? err.detail : String(err));
    }
    // re-render from server truth, never from the optimistic local value
    this.state.directions = await this.api.directions(true);
    this.render();
  }

  private async onExportGrid(magnitude: number, directions: number[]): Promise<void> {
    if (!this.state.inversionId) return;
    const cells: SheetCell[] = [];
    const zero = await this.api.edit({
      inversion_id: this.state.inversionId,
      direction_index: directions[0] ?? 0,
      magnitude: 0,
      size: 128,
    });
    cells.push({
      png: zero.png,
      label: "original",
      provenance: { direction_index: null, magnitude: 0, lpips: zero.lpips },
    });
    for (const index of directions.slice(0, 5)) {
      try {
        const cell = await this.api.edit({
          inversion_id: this.state.inversionId,
          direction_index: index,
          magnitude,
          size: 128,
        });
        cells.push({
          png: cell.png,
          label: `d${index} @ ${magnitude.toFixed(1)} (lpips ${cell.lpips.toFixed(3)})`,
          provenance: { direction_index: index, magnitude, lpips: cell.lpips },
        });
      } catch {
        cells.push({
          png: zero.png,
          label: `d${index}: failed`,
          provenance: { direction_index: index, magnitude, lpips: null },
        });
      }
    }
    const sheet = await composeContactSheet(cells, {
      inversion_id: this.state.inversionId,
      image_id: this.state.selectedImageId,
      magnitude,
      cells: cells.map((c) => c.provenance),
      exported_at: new Date().toISOString(),
    });
    const link = el("a");
    link.href = pngUrl(sheet);
    link.download = "contact_sheet.png";
    link.click();
  }

  private render(): void {
    this.root.innerHTML = "";
    this.root.appendChild(el("div", "toasts"));
    const columns = el("div", "columns");
    columns.appendChild(this.renderBrowser());
    columns.appendChild(this.renderViewerPanel());
    columns.appendChild(this.renderDirections());
    this.root.appendChild(columns);
  }

  private renderBrowser(): HTMLElement {
    const panel = el("section", "panel browser");
    panel.appendChild(el("h2", undefined, "images"));
    const picker = el("div", "image-list");
    void this.api.listImages("train").then((images) => {
      for (const image of images.slice(0, 60)) {
        const thumb = el("img", "thumb") as HTMLImageElement;
        thumb.src = this.api.imageUrl(image.id, 64);
        thumb.title = `${image.path} (label ${image.label})`;
        thumb.onclick = () => void this.onPickImage(image.id);
        picker.appendChild(thumb);
      }
    });
    panel.appendChild(picker);
    return panel;
  }

  private renderViewerPanel(): HTMLElement {
    const panel = el("section", "panel viewer-panel");
    panel.appendChild(el("h2", undefined, "magnitude sweep"));
    panel.appendChild(el("div", "viewer"));
    const bound = this.state.config?.max_magnitude ?? 4;
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = String(-bound);
    slider.max = String(bound);
    slider.step = "0.1";
    slider.value = String(this.state.magnitude);
    slider.oninput = () => {
      const value = clampMagnitude(this.state, Number(slider.value));
      this.state.magnitude = value;
      this.slider.call(value);
      (panel.querySelector(".magnitude") as HTMLElement).textContent =
        value.toFixed(1);
    };
    panel.appendChild(slider);
    const row = el("div", "badge-row");
    row.appendChild(el("span", "magnitude", this.state.magnitude.toFixed(1)));
    row.appendChild(el("span", "lpips-badge", "-"));
    panel.appendChild(row);

    const exportButton = el("button", undefined, "export compare grid");
    exportButton.onclick = () => {
      const chosen = relevantDirections(this.state.directions).map((d) => d.index);
      void this.onExportGrid(this.state.magnitude, chosen);
    };
    panel.appendChild(exportButton);

    const plan = el("button", "plan-builder", "build augmentation plan");
    plan.disabled = !canBuildPlan(this.state.directions);
    plan.onclick = () => {
      const ids = relevantDirections(this.state.directions).map((d) => d.index);
      this.toast(`plan directions: [${ids.join(", ")}]`);
    };
    panel.appendChild(plan);
    this.renderViewer(panel);
    return panel;
  }

  private renderViewer(panel?: HTMLElement): void {
    const host = panel ?? this.root;
    const viewer = host.querySelector(".viewer") as HTMLElement | null;
    const badge = host.querySelector(".lpips-badge") as HTMLElement | null;
    if (!viewer || !badge) return;
    viewer.innerHTML = "";
    if (this.state.lastGoodImage) {
      const img = el("img", "edited") as HTMLImageElement;
      img.src = pngUrl(this.state.lastGoodImage);
      viewer.appendChild(img);
    } else {
      viewer.appendChild(el("div", "placeholder", "pick an image to invert"));
    }
    const info = lpipsBadge(this.state.lastLpips, this.state.config);
    badge.textContent = info.text;
    badge.classList.toggle("wayward", info.wayward);
  }

  private renderDirections(): HTMLElement {
    const panel = el("section", "panel directions");
    panel.appendChild(el("h2", undefined, "directions"));
    const ordered = orderCards(
      this.state.directions.map((d) => ({
        ...d,
        rankScore: d.rank_score,
        singularValue: d.singular_value,
      })),
    );
    for (const direction of ordered) {
      const card = el("div", `card status-${direction.status}`);
      card.appendChild(
        el(
          "div",
          "card-title",
          `#${direction.index} sigma=${direction.singular_value.toFixed(3)}` +
            (direction.name ? ` "${direction.name}"` : ""),
        ),
      );
      card.appendChild(el("div", "card-status", direction.status));
      const controls = el("div", "card-controls");
      const nameInput = el("input") as HTMLInputElement;
      nameInput.placeholder = "name (SV, BCV, ...)";
      nameInput.value = direction.name ?? "";
      controls.appendChild(nameInput);
      for (const status of ["relevant", "rejected"]) {
        const button = el("button", undefined, status);
        button.onclick = () =>
          void this.onCurate(direction, status, nameInput.value || undefined);
        controls.appendChild(button);
      }
      const dupInput = el("input") as HTMLInputElement;
      dupInput.placeholder = "dup of #";
      dupInput.size = 5;
      const dupButton = el("button", undefined, "duplicate");
      dupButton.onclick = () =>
        void this.onCurate(
          direction,
          "duplicate",
          undefined,
          Number(dupInput.value),
        );
      controls.appendChild(dupInput);
      controls.appendChild(dupButton);
      card.appendChild(controls);
      card.onclick = (event) => {
        if ((event.target as HTMLElement).tagName !== "DIV") return;
        this.state.selectedDirection = direction.index;
        this.slider.cancel();
        void this.requestEdit(this.state.magnitude);
        void this.renderStrip(card, direction.index);
      };
      panel.appendChild(card);
    }
    return panel;
  }

  private async renderStrip(card: HTMLElement, index: number): Promise<void> {
    if (!this.state.inversionId || card.querySelector(".strip")) return;
    const info = this.state.directions.find((d) => d.index === index);
    if (!info) return;
    const strip = el("div", "strip");
    card.appendChild(strip);
    const built = await buildCard(
      this.api,
      info,
      this.state.inversionId,
      this.state.config?.max_magnitude ?? 4,
    );
    for (const thumb of built.thumbnails) {
      const img = el("img", "strip-thumb") as HTMLImageElement;
      img.src = pngUrl(thumb.png);
      img.title = `magnitude ${thumb.magnitude} (lpips ${thumb.lpips.toFixed(3)})`;
      strip.appendChild(img);
    }
  }
}
