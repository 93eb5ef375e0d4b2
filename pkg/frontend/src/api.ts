/** Typed client for the segmentation session HTTP API. */

export type Polarity = "positive" | "negative";

export interface SeedTuple extends Array<number | Polarity> {
  0: number;
  1: number;
  2: Polarity;
}

export interface SessionResult {
  prob_png: string; // base64 PNG, grayscale probabilities
  mask_png: string; // base64 PNG, 0/255 mask
  mask_box: [number, number, number, number] | null;
  caption: string | null;
  iou: number | null;
  seeds: [number, number, Polarity][];
}

export interface Proposal {
  box: [number, number, number, number];
  score: number;
  caption: string;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      /* non-JSON error body; keep the status text */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async createSession(imageB64: string, proposals?: Proposal[]): Promise<string> {
    const body: Record<string, unknown> = { image: imageB64 };
    if (proposals) body.proposals = proposals;
    const resp = await fetch(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const data = await parse<{ id: string }>(resp);
    return data.id;
  }

  async addSeed(id: string, x: number, y: number, polarity: Polarity): Promise<SessionResult> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${id}/seeds`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ x, y, polarity }),
    });
    return parse<SessionResult>(resp);
  }

  async undo(id: string): Promise<SessionResult> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${id}/undo`, {
      method: "POST",
    });
    return parse<SessionResult>(resp);
  }

  async getResult(id: string): Promise<SessionResult> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${id}/result`);
    return parse<SessionResult>(resp);
  }

  async deleteSession(id: string): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${id}`, {
      method: "DELETE",
    });
    await parse<unknown>(resp);
  }
}
