import type { SessionView, TurnResponse } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      const detail = await response.text().catch(() => "");
      throw new ApiError(response.status, detail || response.statusText);
    }
    return (await response.json()) as T;
  }

  createSession(): Promise<{ session_id: string; state: string }> {
    return this.request("/sessions", { method: "POST" });
  }

  postTurn(sessionId: string, text: string): Promise<TurnResponse> {
    return this.request(`/sessions/${sessionId}/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}`);
  }
}
