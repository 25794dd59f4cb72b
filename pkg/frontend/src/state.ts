/** View state machine, free of DOM concerns so it is directly testable.
 *
 * Invariants maintained here:
 * - the placement list mirrors the server session after every
 *   acknowledged mutation (failed requests change nothing);
 * - at most one refresh request is in flight, and responses are applied
 *   latest-wins: a stale composite can never overwrite a newer one;
 * - displayed bytes are exactly some server response body, untouched.
 */

import { ApiError, PlacementPatch, PlacementRequest } from "./api.js";

export type StageName = "scale" | "lighting" | "occlusion" | "shadow";
export type OverlayMode = "none" | "occlusion" | "lighting";

/** What the view needs from the service; ServerApi satisfies this. */
export interface CompositeApi {
  backgroundUrl(sceneId: string): string;
  mapUrl(sceneId: string, kind: "occlusion" | "lighting"): string;
  createSession(sceneId: string): Promise<string>;
  uploadSprite(sessionId: string, data: Blob | Uint8Array): Promise<string>;
  addPlacement(sessionId: string, req: PlacementRequest):
    Promise<{ placementId: string; png: Uint8Array }>;
  patchPlacement(sessionId: string, placementId: string,
                 patch: PlacementPatch): Promise<Uint8Array>;
  deletePlacement(sessionId: string, placementId: string): Promise<void>;
  getComposite(sessionId: string, query: string): Promise<Uint8Array>;
}

export interface StageToggles {
  scale: boolean;
  lighting: boolean;
  occlusion: boolean;
  shadow: boolean;
}

export interface PlacementView {
  placementId: string;
  spriteId: string;
  x: number;
  y: number;
  heightOverride: number;
  brightness: number;
}

const DRAG_MIN_INTERVAL_MS = 100; // at most 10 requests per second

export type DropResult = "noop" | "moved" | "rejected" | "failed";

export class ViewState {
  sceneId: string | null = null;
  sceneWidth = 0;
  sceneHeight = 0;
  sessionId: string | null = null;
  sprites: string[] = [];
  placements = new Map<string, PlacementView>();
  selected: string | null = null;
  toggles: StageToggles =
    { scale: true, lighting: true, occlusion: true, shadow: true };
  overlay: OverlayMode = "none";
  displayed: Uint8Array | null = null;
  warning: string | null = null;
  onChange: () => void = () => {};

  private seq = 0;
  private appliedSeq = 0;
  private refreshing = false;
  private refreshQueued = false;
  private lastDragSent = -Infinity;

  constructor(private api: CompositeApi) {}

  private notify(): void {
    this.onChange();
  }

  private apply(png: Uint8Array, seq: number): void {
    if (seq > this.appliedSeq) {
      this.appliedSeq = seq;
      this.displayed = png;
      this.notify();
    }
  }

  compositeQuery(): string {
    const flag = (v: boolean) => (v ? "1" : "0");
    return `scale=${flag(this.toggles.scale)}`
      + `&lighting=${flag(this.toggles.lighting)}`
      + `&occlusion=${flag(this.toggles.occlusion)}`
      + `&shadow=${flag(this.toggles.shadow)}`;
  }

  /** URL of the layer behind the composite; the overlay modes swap in the
   * pseudocolor maps served by the engine. */
  backgroundLayerUrl(): string | null {
    if (!this.sceneId) return null;
    if (this.overlay === "none") return this.api.backgroundUrl(this.sceneId);
    return this.api.mapUrl(this.sceneId, this.overlay);
  }

  async openScene(info: { id: string; width: number; height: number }):
      Promise<void> {
    this.sessionId = await this.api.createSession(info.id);
    this.sceneId = info.id;
    this.sceneWidth = info.width;
    this.sceneHeight = info.height;
    this.placements.clear();
    this.sprites = [];
    this.selected = null;
    this.displayed = null;
    this.warning = null;
    await this.refreshComposite();
  }

  /** Latest-wins, coalescing composite refresh. */
  async refreshComposite(): Promise<void> {
    if (!this.sessionId) return;
    if (this.refreshing) {
      this.refreshQueued = true;
      return;
    }
    this.refreshing = true;
    try {
      do {
        this.refreshQueued = false;
        const mySeq = ++this.seq;
        try {
          const png = await this.api.getComposite(this.sessionId,
                                                  this.compositeQuery());
          this.apply(png, mySeq);
        } catch (err) {
          this.warning = `composite refresh failed: ${String(err)}`;
          this.notify();
        }
      } while (this.refreshQueued);
    } finally {
      this.refreshing = false;
    }
  }

  async addSprite(data: Blob | Uint8Array): Promise<string> {
    if (!this.sessionId) throw new Error("no active session");
    const spriteId = await this.api.uploadSprite(this.sessionId, data);
    this.sprites.push(spriteId);
    this.notify();
    return spriteId;
  }

  async place(spriteId: string, x: number, y: number): Promise<string | null> {
    if (!this.sessionId) throw new Error("no active session");
    const mySeq = ++this.seq;
    try {
      const { placementId, png } =
        await this.api.addPlacement(this.sessionId,
                                    { sprite_id: spriteId, x, y });
      this.placements.set(placementId, {
        placementId, spriteId, x, y, heightOverride: 1, brightness: 1,
      });
      this.selected = placementId;
      this.apply(png, mySeq);
      this.warning = null;
      this.notify();
      return placementId;
    } catch (err) {
      this.warning = err instanceof ApiError && err.status === 422
        ? `cannot place there: ${err.message}`
        : `placement failed: ${String(err)}`;
      this.notify();
      return null;
    }
  }

  private async sendMove(placementId: string, x: number,
                         y: number): Promise<DropResult> {
    const placement = this.placements.get(placementId);
    if (!placement || !this.sessionId) return "failed";
    const mySeq = ++this.seq;
    try {
      const png = await this.api.patchPlacement(this.sessionId, placementId,
                                                { x, y });
      placement.x = x;
      placement.y = y;
      this.apply(png, mySeq);
      this.warning = null;
      this.notify();
      return "moved";
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        // snap back: the mirror still holds the last acknowledged spot
        this.warning = `off the walkable plane (${err.stage ?? "?"}); `
          + "snapped back";
      } else {
        this.warning = `move failed, position kept: ${String(err)}`;
      }
      this.notify();
      return err instanceof ApiError && err.status === 422
        ? "rejected" : "failed";
    }
  }

  /** Mid-drag update, throttled to at most one request per 100 ms.
   * Returns true when a request was actually issued. */
  dragTick(placementId: string, x: number, y: number,
           nowMs: number): boolean {
    if (nowMs - this.lastDragSent < DRAG_MIN_INTERVAL_MS) return false;
    this.lastDragSent = nowMs;
    void this.sendMove(placementId, x, y);
    return true;
  }

  /** Final position on pointer release; no-op drops send nothing. */
  async dropPlacement(placementId: string, x: number,
                      y: number): Promise<DropResult> {
    const placement = this.placements.get(placementId);
    if (!placement) return "failed";
    if (Math.round(placement.x) === Math.round(x)
        && Math.round(placement.y) === Math.round(y)) {
      return "noop";
    }
    return this.sendMove(placementId, x, y);
  }

  async removePlacement(placementId: string): Promise<void> {
    if (!this.sessionId || !this.placements.has(placementId)) return;
    await this.api.deletePlacement(this.sessionId, placementId);
    this.placements.delete(placementId);
    if (this.selected === placementId) this.selected = null;
    await this.refreshComposite();
  }

  async toggleStage(stage: StageName): Promise<void> {
    this.toggles[stage] = !this.toggles[stage];
    this.notify();
    await this.refreshComposite();
  }

  setOverlay(mode: OverlayMode): void {
    this.overlay = mode;
    this.notify();
  }

  async setHeightOverride(placementId: string, value: number): Promise<void> {
    await this.patchAttribute(placementId, { height_override: value },
                              p => { p.heightOverride = value; });
  }

  async setBrightness(placementId: string, value: number): Promise<void> {
    await this.patchAttribute(placementId, { brightness: value },
                              p => { p.brightness = value; });
  }

  private async patchAttribute(
      placementId: string,
      patch: { height_override?: number; brightness?: number },
      commit: (p: PlacementView) => void): Promise<void> {
    const placement = this.placements.get(placementId);
    if (!placement || !this.sessionId) return;
    const mySeq = ++this.seq;
    try {
      const png = await this.api.patchPlacement(this.sessionId, placementId,
                                                patch);
      commit(placement);
      this.apply(png, mySeq);
      this.notify();
    } catch (err) {
      this.warning = `adjustment rejected: ${String(err)}`;
      this.notify();
    }
  }
}
