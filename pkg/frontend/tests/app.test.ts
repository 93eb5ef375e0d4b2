/** Scripted end-to-end interaction against the stub server: upload, click
 * twice with the foreground tool and once with the background tool at 2x
 * zoom, watch the overlay and caption update, then undo. The stub records
 * every coordinate it receives, so exact pixel mapping is asserted on the
 * server side. */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App, Marker, PngDecoder, Renderer } from "../src/app.js";
import { StubServer } from "./stub_server.js";

class RecordingRenderer implements Renderer {
  overlays: Uint8ClampedArray[] = [];
  captions: (string | null)[] = [];
  markerFrames: Marker[][] = [];
  messages: (string | null)[] = [];
  clickCounts: number[] = [];
  imageShown = false;

  showImage(): void {
    this.imageShown = true;
  }
  showOverlay(layer: Uint8ClampedArray | null): void {
    if (layer) this.overlays.push(layer);
  }
  showMarkers(markers: Marker[]): void {
    this.markerFrames.push(markers);
  }
  showCaption(caption: string | null): void {
    this.captions.push(caption);
  }
  showMessage(message: string | null): void {
    this.messages.push(message);
  }
  showClickCount(count: number): void {
    this.clickCounts.push(count);
  }
}

/** The stub encodes raw bytes as base64, so decoding is a base64 decode. */
const rawDecoder: PngDecoder = {
  async decodeGray(b64: string): Promise<Uint8ClampedArray> {
    return new Uint8ClampedArray(Buffer.from(b64, "base64"));
  },
};

describe("interaction loop against the stub server", () => {
  let server: StubServer;
  let renderer: RecordingRenderer;
  let app: App;

  beforeEach(async () => {
    server = new StubServer();
    await server.start();
    renderer = new RecordingRenderer();
    app = new App(new ApiClient(server.baseUrl), renderer, rawDecoder, 2);
  });

  afterEach(async () => {
    await server.stop();
  });

  async function upload(): Promise<void> {
    await app.upload("aW1hZ2U=", server.width, server.height);
  }

  it("uploads, clicks 2 positive + 1 negative at 2x zoom, and undoes", async () => {
    await upload();
    expect(app.state.sessionId).toBe("s1");
    expect(renderer.imageShown).toBe(true);
    expect(app.state.seeds).toEqual([]);

    // canvas (5, 3) at 2x covers image pixel (2, 1)
    await app.clickCanvas(5, 3);
    // canvas (12, 8) -> image (6, 4)
    await app.clickCanvas(12, 8);
    app.setTool("negative");
    // canvas (1, 10) -> image (0, 5)
    await app.clickCanvas(1, 10);

    expect(server.received).toEqual([
      { x: 2, y: 1, polarity: "positive" },
      { x: 6, y: 4, polarity: "positive" },
      { x: 0, y: 5, polarity: "negative" },
    ]);

    // overlay re-rendered after upload + each click, with changing content
    expect(renderer.overlays.length).toBe(4);
    expect(renderer.overlays[1][3]).toBe(20); // probability 40 at half opacity
    expect(renderer.overlays[3][3]).toBe(60); // probability 120 at half opacity

    // caption panel updates after each click
    expect(renderer.captions).toEqual([
      null,
      "caption after 1 clicks",
      "caption after 2 clicks",
      "caption after 3 clicks",
    ]);
    expect(app.state.iou).toBeCloseTo(0.3);

    // markers mirror the server's seed list
    expect(app.state.seeds).toEqual([
      [2, 1, "positive"],
      [6, 4, "positive"],
      [0, 5, "negative"],
    ]);
    const lastMarkers = renderer.markerFrames.at(-1)!;
    expect(lastMarkers.map((m) => m.polarity)).toEqual([
      "positive", "positive", "negative",
    ]);
    // markers sit at the canvas-space centers of their image pixels
    expect(lastMarkers[0]).toMatchObject({ x: 5, y: 3 });

    // undo removes the last click and the overlay reverts to the 2-click frame
    await app.undo();
    expect(app.state.seeds).toEqual([
      [2, 1, "positive"],
      [6, 4, "positive"],
    ]);
    expect(app.state.caption).toBe("caption after 2 clicks");
    expect(renderer.overlays.at(-1)).toEqual(renderer.overlays[2]);
    expect(renderer.clickCounts.at(-1)).toBe(2);
  });

  it("ignores clicks outside the image with a message", async () => {
    await upload();
    await app.clickCanvas(server.width * 2, 0); // just past the right edge
    expect(server.received).toEqual([]);
    expect(renderer.messages.at(-1)).toMatch(/outside/);
    expect(app.state.seeds).toEqual([]);
  });

  it("ignores clicks while a request is in flight", async () => {
    await upload();
    const first = app.clickCanvas(1, 1);
    await app.clickCanvas(3, 3); // returns immediately: busy flag set
    await first;
    expect(server.received.length).toBe(1);
  });

  it("replaces the session on re-upload", async () => {
    await upload();
    await app.clickCanvas(1, 1);
    await upload();
    expect(app.state.sessionId).toBe("s2");
    expect(app.state.seeds).toEqual([]);
    expect(server.sessions.has("s1")).toBe(false);
  });

  it("surfaces server errors as messages", async () => {
    await upload();
    await app.undo(); // nothing to undo -> 409
    expect(renderer.messages.at(-1)).toMatch(/409/);
  });

  it("switches overlay content with the mode selector", async () => {
    await upload();
    await app.clickCanvas(5, 3);
    const probAlpha = renderer.overlays.at(-1)![3];
    await app.setOverlayMode("mask");
    const maskAlpha = renderer.overlays.at(-1)![3];
    expect(probAlpha).toBe(20); // probability 40 at half opacity
    expect(maskAlpha).toBe(128); // full mask at half opacity
  });
});
