import { ApiClient } from "./api.js";
import {
  animateAvatar,
  candidateCards,
  errorBanner,
  messageBubble,
  planCard,
  stateIndicator,
} from "./render.js";
import type { SessionView, TurnResponse } from "./types.js";

// One in-flight turn per session, enforced client-side: the send control is
// disabled from submit until the server answers (or fails).
export class ChatApp {
  private sessionId: string | null = null;
  private state = "Icebreaker";
  private inFlight = false;

  private transcriptEl: HTMLElement;
  private candidatesEl: HTMLElement;
  private stateEl: HTMLElement;
  private planEl: HTMLElement;
  private avatarEl: HTMLElement;
  private bannerEl: HTMLElement;
  private inputEl: HTMLInputElement;
  private sendEl: HTMLButtonElement;

  constructor(private root: HTMLElement, private api: ApiClient) {
    this.root.innerHTML = `
      <header class="top">
        <div class="avatar" data-motions=""></div>
        <div class="state-slot"></div>
      </header>
      <main class="transcript"></main>
      <section class="candidates-slot"></section>
      <section class="plan-slot"></section>
      <div class="banner-slot"></div>
      <footer class="composer">
        <input class="chat-input" type="text" placeholder="メッセージを入力" />
        <button class="send-button" type="button">送信</button>
      </footer>`;
    this.transcriptEl = this.query(".transcript");
    this.candidatesEl = this.query(".candidates-slot");
    this.stateEl = this.query(".state-slot");
    this.planEl = this.query(".plan-slot");
    this.avatarEl = this.query(".avatar");
    this.bannerEl = this.query(".banner-slot");
    this.inputEl = this.query(".chat-input");
    this.sendEl = this.query(".send-button");

    this.sendEl.addEventListener("click", () => void this.send());
    this.inputEl.addEventListener("keydown", (event) => {
      if (event.key === "Enter") void this.send();
    });
  }

  private query<T extends HTMLElement>(selector: string): T {
    return this.root.querySelector(selector) as T;
  }

  /** Resume the session in the URL hash, or start a fresh one. */
  async start(): Promise<void> {
    const fromHash = window.location.hash.replace(/^#/, "");
    if (fromHash) {
      this.sessionId = fromHash;
      await this.refresh();
      return;
    }
    const created = await this.api.createSession();
    this.sessionId = created.session_id;
    window.location.hash = created.session_id;
    this.setState(created.state);
  }

  /** Rebuild the entire view from GET /sessions/{id}; no client-side state survives. */
  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const view: SessionView = await this.api.getSession(this.sessionId);
    this.transcriptEl.replaceChildren();
    for (const entry of view.transcript) {
      this.transcriptEl.append(messageBubble(entry));
    }
    this.renderCandidates(view.candidates);
    this.renderPlan(view.plan);
    this.setState(view.state);
  }

  async send(): Promise<void> {
    const text = this.inputEl.value.trim();
    if (!text || this.inFlight || !this.sessionId || this.state === "End") return;

    this.inFlight = true;
    this.sendEl.disabled = true;
    this.bannerEl.replaceChildren();
    const optimistic = messageBubble({ speaker: "user", text, timestamp: Date.now() / 1000 });
    optimistic.classList.add("pending");
    this.transcriptEl.append(optimistic);

    let turn: TurnResponse;
    try {
      turn = await this.api.postTurn(this.sessionId, text);
    } catch (err) {
      optimistic.remove(); // composed input stays in the box for retry
      this.bannerEl.append(
        errorBanner(`送信に失敗しました (${String((err as Error).message)})`, () => void this.send()),
      );
      this.inFlight = false;
      this.sendEl.disabled = this.state === "End";
      return;
    }

    optimistic.classList.remove("pending");
    this.inputEl.value = "";
    this.transcriptEl.append(
      messageBubble({ speaker: "system", text: turn.system_text, timestamp: 0, spans: turn.spans }),
    );
    animateAvatar(this.avatarEl, turn.motions);
    this.renderCandidates(turn.candidates);
    this.renderPlan(turn.plan);
    this.setState(turn.state);
    this.inFlight = false;
    this.sendEl.disabled = this.state === "End";
  }

  private renderCandidates(candidates: SessionView["candidates"]): void {
    this.candidatesEl.replaceChildren();
    if (candidates.length) {
      this.candidatesEl.append(candidateCards(candidates));
    }
  }

  private renderPlan(plan: SessionView["plan"]): void {
    this.planEl.replaceChildren();
    if (plan) {
      this.planEl.append(planCard(plan));
    }
  }

  private setState(state: string): void {
    this.state = state;
    this.stateEl.replaceChildren(stateIndicator(state));
    const ended = state === "End";
    this.inputEl.disabled = ended;
    this.sendEl.disabled = ended || this.inFlight;
    if (ended) {
      this.inputEl.placeholder = "ご相談は完了しました";
    }
  }
}
