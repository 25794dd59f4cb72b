import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ServerApi } from "../src/api.js";

interface Recorded {
  url: string;
  method: string;
  body?: BodyInit | null;
}

function mockFetch(handler: (url: string, init?: RequestInit) => Response) {
  const calls: Recorded[] = [];
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
    calls.push({ url, method: init?.method ?? "GET", body: init?.body });
    return handler(url, init);
  });
  return calls;
}

function pngResponse(tag: string, headers: Record<string, string> = {}) {
  return new Response(new TextEncoder().encode(tag),
                      { headers: { "content-type": "image/png", ...headers } });
}

afterEach(() => vi.unstubAllGlobals());

describe("ServerApi", () => {
  it("hits the documented routes", async () => {
    const calls = mockFetch(url => {
      if (url.endsWith("/scenes")) {
        return Response.json([{ id: "a", width: 1, height: 1,
                                products_built: true }]);
      }
      if (url.endsWith("/sessions")) {
        return Response.json({ session_id: "s1" });
      }
      if (url.endsWith("/sprites")) {
        return Response.json({ sprite_id: "spr1" });
      }
      return pngResponse("img", { "X-Placement-Id": "p1" });
    });
    const api = new ServerApi("");
    expect((await api.listScenes())[0].id).toBe("a");
    expect(await api.createSession("a")).toBe("s1");
    expect(await api.uploadSprite("s1", new Uint8Array([1]))).toBe("spr1");
    const placed = await api.addPlacement("s1",
                                          { sprite_id: "spr1", x: 3, y: 4 });
    expect(placed.placementId).toBe("p1");
    await api.patchPlacement("s1", "p1", { x: 9, y: 9 });
    await api.getComposite("s1", "shadow=0");
    expect(calls.map(c => `${c.method} ${c.url}`)).toEqual([
      "GET /scenes",
      "POST /scenes/a/sessions",
      "POST /sessions/s1/sprites",
      "POST /sessions/s1/placements",
      "PATCH /sessions/s1/placements/p1",
      "GET /sessions/s1/composite.png?shadow=0",
    ]);
    expect(JSON.parse(String(calls[3].body))).toEqual(
      { sprite_id: "spr1", x: 3, y: 4 });
  });

  it("returns untouched png bytes", async () => {
    mockFetch(() => pngResponse("exact-bytes"));
    const api = new ServerApi("");
    const bytes = await api.getComposite("s1", "");
    expect(new TextDecoder().decode(bytes)).toBe("exact-bytes");
  });

  it("surfaces structured errors with status and stage", async () => {
    mockFetch(() => Response.json(
      { error: "predicted height -3.0 is not positive",
        stage: "groundplane" },
      { status: 422 }));
    const api = new ServerApi("");
    const err = await api.patchPlacement("s1", "p1", { x: 1, y: 1 })
      .then(() => null, e => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect(err!.status).toBe(422);
    expect(err!.stage).toBe("groundplane");
    expect(err!.message).toContain("not positive");
  });

  it("builds map and background urls", () => {
    const api = new ServerApi("http://host:1");
    expect(api.backgroundUrl("sc")).toBe("http://host:1/scenes/sc/background.png");
    expect(api.mapUrl("sc", "lighting"))
      .toBe("http://host:1/scenes/sc/maps/lighting.png");
  });
});
