/** DOM wiring. The composite <img> always shows the raw bytes of the last
 * server response; dragging shows a ghost outline instead of any
 * client-side compositing, so what you see is always engine output. */

import { ServerApi } from "./api.js";
import { OverlayMode, StageName, ViewState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class App {
  private state: ViewState;
  private objectUrl: string | null = null;
  private dragging = false;

  constructor(private api: ServerApi) {
    this.state = new ViewState(api);
    this.state.onChange = () => this.render();
  }

  async start(): Promise<void> {
    const select = el<HTMLSelectElement>("scene-select");
    const scenes = await this.api.listScenes();
    for (const scene of scenes) {
      const option = document.createElement("option");
      option.value = scene.id;
      option.textContent = scene.products_built
        ? `${scene.id} (${scene.width}x${scene.height})`
        : `${scene.id} (products not built)`;
      option.disabled = !scene.products_built;
      select.append(option);
    }

    el<HTMLButtonElement>("open-scene").onclick = async () => {
      const chosen = scenes.find(s => s.id === select.value);
      if (chosen) await this.state.openScene(chosen);
    };

    el<HTMLInputElement>("sprite-file").onchange = async event => {
      const input = event.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) await this.state.addSprite(file);
      input.value = "";
    };

    for (const stage of ["scale", "lighting", "occlusion", "shadow"]) {
      el<HTMLInputElement>(`stage-${stage}`).onchange = () =>
        void this.state.toggleStage(stage as StageName);
    }
    el<HTMLSelectElement>("overlay-select").onchange = event =>
      this.state.setOverlay(
        (event.target as HTMLSelectElement).value as OverlayMode);

    el<HTMLInputElement>("height-slider").onchange = event => {
      if (this.state.selected) {
        void this.state.setHeightOverride(
          this.state.selected,
          parseFloat((event.target as HTMLInputElement).value));
      }
    };
    el<HTMLInputElement>("brightness-slider").onchange = event => {
      if (this.state.selected) {
        void this.state.setBrightness(
          this.state.selected,
          parseFloat((event.target as HTMLInputElement).value));
      }
    };
    el<HTMLButtonElement>("delete-placement").onclick = () => {
      if (this.state.selected) {
        void this.state.removePlacement(this.state.selected);
      }
    };

    this.wirePointer();
    this.render();
  }

  /** Image-space bottom-left-origin coordinates of a pointer event. */
  private imageCoords(event: PointerEvent): { x: number; y: number } {
    const img = el<HTMLImageElement>("composite");
    const rect = img.getBoundingClientRect();
    const sx = this.state.sceneWidth / rect.width;
    const sy = this.state.sceneHeight / rect.height;
    const x = (event.clientX - rect.left) * sx;
    const row = (event.clientY - rect.top) * sy;
    return { x, y: this.state.sceneHeight - 1 - row };
  }

  private wirePointer(): void {
    const img = el<HTMLImageElement>("composite");
    const ghost = el<HTMLDivElement>("ghost");

    img.onpointerdown = async event => {
      if (!this.state.sessionId) return;
      const { x, y } = this.imageCoords(event);
      const spriteSelect = el<HTMLSelectElement>("sprite-select");
      if (!this.state.selected && spriteSelect.value) {
        await this.state.place(spriteSelect.value, x, y);
        return;
      }
      if (this.state.selected) {
        this.dragging = true;
        img.setPointerCapture(event.pointerId);
      }
    };

    img.onpointermove = event => {
      if (!this.dragging || !this.state.selected) return;
      const { x, y } = this.imageCoords(event);
      const rect = img.getBoundingClientRect();
      ghost.style.display = "block";
      ghost.style.left = `${event.clientX - rect.left}px`;
      ghost.style.top = `${event.clientY - rect.top}px`;
      this.state.dragTick(this.state.selected, x, y, performance.now());
    };

    img.onpointerup = async event => {
      if (!this.dragging || !this.state.selected) return;
      this.dragging = false;
      ghost.style.display = "none";
      const { x, y } = this.imageCoords(event);
      await this.state.dropPlacement(this.state.selected, x, y);
    };
  }

  private render(): void {
    const img = el<HTMLImageElement>("composite");
    const background = el<HTMLImageElement>("background-layer");
    const warning = el<HTMLDivElement>("warning");
    const spriteSelect = el<HTMLSelectElement>("sprite-select");

    const url = this.state.backgroundLayerUrl();
    if (url) background.src = url;
    background.style.display = url ? "block" : "none";
    // overlays replace the composite view with the engine's map renders
    img.style.opacity = this.state.overlay === "none" ? "1" : "0.25";

    if (this.state.displayed) {
      if (this.objectUrl) URL.revokeObjectURL(this.objectUrl);
      this.objectUrl = URL.createObjectURL(
        new Blob([this.state.displayed as BlobPart], { type: "image/png" }));
      img.src = this.objectUrl;
      img.style.visibility = "visible";
    }

    warning.textContent = this.state.warning ?? "";
    warning.style.display = this.state.warning ? "block" : "none";

    const current = new Set(Array.from(spriteSelect.options).map(o => o.value));
    for (const spriteId of this.state.sprites) {
      if (!current.has(spriteId)) {
        const option = document.createElement("option");
        option.value = spriteId;
        option.textContent = spriteId;
        spriteSelect.append(option);
      }
    }

    const selected = this.state.selected
      ? this.state.placements.get(this.state.selected) : null;
    el<HTMLDivElement>("placement-info").textContent = selected
      ? `${selected.placementId} @ (${selected.x.toFixed(0)}, `
        + `${selected.y.toFixed(0)})`
      : "no placement selected";
  }
}
