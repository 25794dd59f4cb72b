/** Typed client for the compositing service. Every image shown by the UI
 * comes back through these calls as raw PNG bytes. */

export interface SceneInfo {
  id: string;
  width: number;
  height: number;
  products_built: boolean;
}

export interface PlacementRequest {
  sprite_id: string;
  x: number;
  y: number;
  height_override?: number;
}

export interface PlacementPatch {
  x?: number;
  y?: number;
  height_override?: number;
  brightness?: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string, public stage?: string) {
    super(message);
  }
}

async function raise(response: Response): Promise<never> {
  let message = `${response.status}`;
  let stage: string | undefined;
  try {
    const body = await response.json();
    message = body.error ?? message;
    stage = body.stage;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(response.status, message, stage);
}

async function pngBytes(response: Response): Promise<Uint8Array> {
  if (!response.ok) await raise(response);
  return new Uint8Array(await response.arrayBuffer());
}

export class ServerApi {
  constructor(private base: string = "") {}

  backgroundUrl(sceneId: string): string {
    return `${this.base}/scenes/${sceneId}/background.png`;
  }

  mapUrl(sceneId: string, kind: "occlusion" | "lighting"): string {
    return `${this.base}/scenes/${sceneId}/maps/${kind}.png`;
  }

  async listScenes(): Promise<SceneInfo[]> {
    const r = await fetch(`${this.base}/scenes`);
    if (!r.ok) await raise(r);
    return r.json();
  }

  async createSession(sceneId: string): Promise<string> {
    const r = await fetch(`${this.base}/scenes/${sceneId}/sessions`,
                          { method: "POST" });
    if (!r.ok) await raise(r);
    return (await r.json()).session_id;
  }

  async uploadSprite(sessionId: string, data: Blob | Uint8Array):
      Promise<string> {
    const r = await fetch(`${this.base}/sessions/${sessionId}/sprites`, {
      method: "POST",
      headers: { "content-type": "image/png" },
      body: data as BodyInit,
    });
    if (!r.ok) await raise(r);
    return (await r.json()).sprite_id;
  }

  async addPlacement(sessionId: string, req: PlacementRequest):
      Promise<{ placementId: string; png: Uint8Array }> {
    const r = await fetch(`${this.base}/sessions/${sessionId}/placements`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!r.ok) await raise(r);
    return {
      placementId: r.headers.get("X-Placement-Id") ?? "",
      png: new Uint8Array(await r.arrayBuffer()),
    };
  }

  async patchPlacement(sessionId: string, placementId: string,
                       patch: PlacementPatch): Promise<Uint8Array> {
    const r = await fetch(
      `${this.base}/sessions/${sessionId}/placements/${placementId}`, {
        method: "PATCH",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(patch),
      });
    return pngBytes(r);
  }

  async deletePlacement(sessionId: string, placementId: string):
      Promise<void> {
    const r = await fetch(
      `${this.base}/sessions/${sessionId}/placements/${placementId}`,
      { method: "DELETE" });
    if (!r.ok) await raise(r);
  }

  async getComposite(sessionId: string, query: string): Promise<Uint8Array> {
    const r = await fetch(
      `${this.base}/sessions/${sessionId}/composite.png?${query}`);
    return pngBytes(r);
  }
}
