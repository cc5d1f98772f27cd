// Pure DOM builders. Everything here derives from server payloads so the
// whole view can be rebuilt from GET /sessions/{id} at any time.

import type {
  Candidate,
  EmphasisSpan,
  MotionCommand,
  Plan,
  TranscriptEntry,
} from "./types.js";
import { SCENARIO_STATES } from "./types.js";

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

// Span offsets count code points (not UTF-16 units), so slice via code points.
function slice(codepoints: string[], start: number, end: number): string {
  return codepoints.slice(start, end).join("");
}

export function emphasizedText(text: string, spans: EmphasisSpan[]): DocumentFragment {
  const fragment = document.createDocumentFragment();
  const codepoints = Array.from(text);
  let cursor = 0;
  for (const span of [...spans].sort((a, b) => a.start - b.start)) {
    if (span.start > cursor) {
      fragment.append(slice(codepoints, cursor, span.start));
    }
    const mark = el("span", `emphasis emphasis-${span.level}`, slice(codepoints, span.start, span.end));
    mark.dataset.category = span.category;
    if (span.phonetic) {
      mark.title = span.phonetic.replaceAll("｜", " ");
    }
    fragment.append(mark);
    cursor = span.end;
  }
  if (cursor < codepoints.length) {
    fragment.append(slice(codepoints, cursor, codepoints.length));
  }
  return fragment;
}

export function messageBubble(entry: TranscriptEntry): HTMLElement {
  const bubble = el("div", `bubble bubble-${entry.speaker}`);
  if (entry.speaker === "system" && entry.spans?.length) {
    bubble.append(emphasizedText(entry.text, entry.spans));
  } else {
    bubble.textContent = entry.text;
  }
  return bubble;
}

export function candidateCards(candidates: Candidate[]): HTMLElement {
  const grid = el("div", "cards");
  for (const candidate of candidates) {
    const card = el("article", "card");
    const image = el("img", "card-image");
    image.src = candidate.image_ref;
    image.alt = candidate.name;
    card.append(image);
    card.append(el("h3", "card-name", candidate.name));
    card.append(el("p", "card-reading", candidate.reading.replaceAll("｜", " ")));
    card.append(el("p", "card-reason", candidate.reason));
    card.append(el("p", "card-genres", candidate.genres.join("・")));
    if (candidate.distance_km !== null) {
      card.append(el("p", "card-distance", `1か所目から ${candidate.distance_km.toFixed(1)} km`));
    }
    grid.append(card);
  }
  return grid;
}

export function stateIndicator(state: string): HTMLElement {
  const list = el("ol", "state-indicator");
  for (const name of SCENARIO_STATES) {
    const item = el("li", "state-step", name);
    if (name === state) item.classList.add("state-active");
    list.append(item);
  }
  list.dataset.state = state;
  return list;
}

export function planCard(plan: Plan): HTMLElement {
  const card = el("section", "plan-card");
  card.append(el("h2", "plan-title", "ご旅行プラン"));
  const first = plan.first_spot_name ?? plan.first_spot;
  const second = plan.second_spot_name ?? plan.second_spot;
  card.append(el("p", "plan-spots", `1. ${first} → 2. ${second}`));
  card.append(el("p", "plan-distance", `スポット間の距離: ${plan.inter_spot_distance.toFixed(2)} km`));
  if (plan.feasible !== undefined) {
    card.append(el(
      "p",
      plan.feasible ? "plan-feasible" : "plan-infeasible",
      plan.feasible ? "無理なく回れる距離です" : "移動距離が長めのプランです",
    ));
  }
  return card;
}

const MOTION_GLYPHS: Record<MotionCommand["kind"], string> = {
  Nod: "🙂",
  Bow: "🙇",
  LookMonitor: "👀🖥",
  LookUser: "👀",
};

export function animateAvatar(avatar: HTMLElement, motions: MotionCommand[]): void {
  avatar.dataset.motions = motions.map((m) => m.kind).join(",");
  const lead = motions[0];
  if (!lead) return;
  avatar.textContent = MOTION_GLYPHS[lead.kind];
  avatar.className = `avatar motion-${lead.kind.toLowerCase()}`;
}

export function errorBanner(message: string, onRetry: () => void): HTMLElement {
  const banner = el("div", "error-banner");
  banner.append(el("span", "error-text", message));
  const retry = el("button", "retry-button", "再送信");
  retry.addEventListener("click", onRetry);
  banner.append(retry);
  return banner;
}
