"""Prompt assembly, joint response/act generation, and keyword extraction.

Every turn asks the backend for a response *and* a machine-readable dialogue
act in one shot, line-oriented:

    RESPONSE: <single line of text>
    ACT: <DialogueAct label>

Forcing the act out with the response keeps the reply aligned with the
scenario phase and gives the state machine its transition trigger. Parsing is
total: malformed output is retried, then absorbed by a per-state fallback, so
a session can never wedge on backend garbage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendRequest, BackendTransportError, BackendUnavailable, GenerationBackend
from .catalog import Spot, normalize
from .config import DATA_DIR, Config
from .scenario import (
    INTERVIEW_STATES,
    INTRODUCTION_STATES,
    RECOMMENDATION_STATES,
    DialogueAct,
    ScenarioState,
    SessionRecord,
    accepted_acts,
)

S = ScenarioState
A = DialogueAct


class GenerationError(Exception):
    pass


class MismatchedAuxiliary(GenerationError):
    """The catalog view does not match the prompting state's class."""


class EmptyInterview(GenerationError):
    """Keyword extraction requires at least one user turn of interview context."""


@dataclass(frozen=True)
class ParseFailure:
    reason: str


@dataclass(frozen=True)
class GenerationOutput:
    response_text: str
    act: DialogueAct


@dataclass
class GenreList:
    entries: list[tuple[str, str]]  # (genre name, one-line detail)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("genre list must be non-empty")
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("genre names must be unique")

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]


@dataclass(frozen=True)
class SpotDigestRow:
    spot_id: str
    name: str
    reading: str
    reason: str
    genres: tuple[str, ...]
    distance_km: float | None  # from the first chosen spot; second slot only


@dataclass
class SpotDigest:
    rows: list[SpotDigestRow]

    def __post_init__(self):
        if len(self.rows) > 3:
            raise ValueError("a spot digest holds at most three candidates")


@dataclass
class PromptBundle:
    state: ScenarioState
    instructions: str
    flow_description: str
    few_shot_examples: list[tuple[str, str, str]]  # (user, system, act label)
    context_window: list[tuple[str, str]]          # (speaker, text), most recent last
    auxiliary: GenreList | SpotDigest | None

    def system_prompt(self) -> str:
        lines = [self.instructions, "", "# 対話の進め方", self.flow_description, ""]
        allowed = ", ".join(sorted(act.value for act in accepted_acts(self.state)))
        lines += [
            "# 出力形式（厳守）",
            "RESPONSE: <お客様への応答（1行）>",
            f"ACT: <次のいずれか: {allowed}>",
            "",
            "# 応答例",
        ]
        for user, system, act in self.few_shot_examples:
            lines += [f"ユーザー: {user}", f"RESPONSE: {system}", f"ACT: {act}", ""]
        aux = _render_auxiliary(self.auxiliary)
        if aux:
            lines.append(aux)
        return "\n".join(lines).rstrip() + "\n"

    def user_context(self) -> str:
        lines = ["# 直近の会話"]
        for speaker, text in self.context_window:
            label = "ユーザー" if speaker == "user" else "システム"
            lines.append(f"{label}: {text}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        aux: dict | None = None
        if isinstance(self.auxiliary, GenreList):
            aux = {"kind": "genres", "entries": self.auxiliary.entries}
        elif isinstance(self.auxiliary, SpotDigest):
            aux = {
                "kind": "spots",
                "rows": [
                    {
                        "spot_id": r.spot_id,
                        "name": r.name,
                        "reading": r.reading,
                        "reason": r.reason,
                        "genres": list(r.genres),
                        "distance_km": r.distance_km,
                    }
                    for r in self.auxiliary.rows
                ],
            }
        return json.dumps(
            {
                "state": self.state.value,
                "instructions": self.instructions,
                "flow_description": self.flow_description,
                "few_shot_examples": self.few_shot_examples,
                "context_window": self.context_window,
                "auxiliary": aux,
            },
            ensure_ascii=False,
            sort_keys=True,
        )


def _render_auxiliary(aux: GenreList | SpotDigest | None) -> str:
    if aux is None:
        return ""
    if isinstance(aux, GenreList):
        lines = ["# 観光スポットのジャンル一覧"]
        lines += [f"- {name}: {detail}" for name, detail in aux.entries]
        return "\n".join(lines)
    lines = ["# 候補スポット情報"]
    for row in aux.rows:
        parts = [
            f"- {row.name}（{row.reading.replace('｜', '')}）",
            f"  ジャンル: {'、'.join(row.genres)}",
            f"  おすすめ理由: {row.reason}",
        ]
        if row.distance_km is not None:
            parts.append(f"  1つ目のスポットからの距離: {row.distance_km:.1f}km")
        lines += parts
    return "\n".join(lines)


INSTRUCTIONS: dict[ScenarioState, str] = {
    S.Icebreaker: (
        "あなたは京都の旅行代理店カウンターで働く案内係「京花（きょうか）」です。"
        "まずはお客様の緊張をほぐす軽い雑談で興味を引いてください。京都にちなんだ軽い小噺も歓迎です。"
    ),
    S.Interview1: (
        "あなたは旅行代理店の案内係「京花」です。お客様が1か所目に訪れたい観光スポットの希望"
        "（ジャンル・雰囲気・興味）を聞き出してください。十分な希望が集まったら面談を締めてください。"
    ),
    S.Introduction1: (
        "あなたは旅行代理店の案内係「京花」です。検索で見つかった3つの候補スポットを、"
        "画像をご覧いただきながら、それぞれのおすすめ理由を一言添えて簡潔に紹介してください。"
    ),
    S.Recommendation1: (
        "あなたは旅行代理店の案内係「京花」です。候補スポットの情報を使って1か所目の訪問先を"
        "決められるよう推薦してください。お客様が決めたら決定を、全て断られたら再検索の意向を示してください。"
    ),
    S.ResearchInterview1: (
        "あなたは旅行代理店の案内係「京花」です。先ほどの候補はお気に召さなかったので、"
        "1か所目について別の観点から改めて希望を聞き出してください。"
    ),
    S.Interview2: (
        "あなたは旅行代理店の案内係「京花」です。2か所目に訪れたい観光スポットの希望を聞き出してください。"
        "1か所目と合わせて楽しめる観点も歓迎です。"
    ),
    S.Introduction2: (
        "あなたは旅行代理店の案内係「京花」です。2か所目の候補3つを、画像と一言のおすすめ理由を"
        "添えて紹介してください。1か所目からの距離も伝えてください。"
    ),
    S.Recommendation2: (
        "あなたは旅行代理店の案内係「京花」です。候補情報（1か所目からの距離を含む）を使って"
        "2か所目の訪問先を決められるよう推薦してください。"
    ),
    S.ResearchInterview2: (
        "あなたは旅行代理店の案内係「京花」です。2か所目の候補はお気に召さなかったので、"
        "改めて希望を聞き出してください。"
    ),
    S.Closing: (
        "あなたは旅行代理店の案内係「京花」です。決まった2か所の観光プランを復唱して確認し、"
        "お礼を述べて対話を締めくくってください。"
    ),
}

FLOW_NOTES: dict[ScenarioState, str] = {
    S.Icebreaker: "雑談を続けるなら ChatContinue、お客様が乗ってきたら ChatDone で面談へ進みます。",
    S.Interview1: "希望がまだ浅ければ AskMore で聞き続け、検索に足りる希望が揃ったら RequirementsComplete。",
    S.Introduction1: "3つの候補を紹介し終えたら IntroDelivered で推薦フェーズへ。",
    S.Recommendation1: "相談が続くなら SpotDiscuss、お客様が1つ選んだら SpotAccepted、全滅なら AllSpotsRejected。",
    S.ResearchInterview1: "AskMore で掘り下げ、新しい希望が揃ったら RequirementsComplete で再検索へ。",
    S.Interview2: "希望がまだ浅ければ AskMore、揃ったら RequirementsComplete。",
    S.Introduction2: "3つの候補を紹介し終えたら IntroDelivered。",
    S.Recommendation2: "相談が続くなら SpotDiscuss、決まれば SpotAccepted、全滅なら AllSpotsRejected。",
    S.ResearchInterview2: "AskMore で掘り下げ、揃ったら RequirementsComplete。",
    S.Closing: "プランにご納得いただけたら PlanConfirmed、お別れの挨拶なら Farewell。",
}

STATE_EXAMPLES: dict[ScenarioState, list[tuple[str, str, str]]] = {
    S.Icebreaker: [
        ("こんにちは", "こんにちは、ようこそ。案内係の京花です。京都は今日もいい天気で、観光日和ですよ。", "ChatContinue"),
        ("そろそろ相談したいです", "かしこまりました。それでは、どんなスポットがお好みか伺いますね。", "ChatDone"),
    ],
    S.Interview1: [
        ("お寺が見たいです", "お寺ですね。静かなところと賑やかなところ、どちらがお好みですか？", "AskMore"),
        ("静かで庭がきれいなところがいいです", "静かで庭園の美しいお寺ですね。ぴったりの場所をお探しします。", "RequirementsComplete"),
    ],
    S.Introduction1: [
        ("お願いします", "こちらの3か所が見つかりました。画面の写真とあわせてご覧くださいね。", "IntroDelivered"),
    ],
    S.Recommendation1: [
        ("最初のところを詳しく", "はい、こちらは庭園が特に評判で、朝は人も少なく静かに回れますよ。", "SpotDiscuss"),
        ("ここに決めます", "承知しました。1か所目はこちらに決定ですね。", "SpotAccepted"),
        ("どれもピンと来ません", "かしこまりました。別の切り口で改めてお好みを伺いますね。", "AllSpotsRejected"),
    ],
    S.ResearchInterview1: [
        ("もっと体験っぽいことがしたい", "体験型ですね。抹茶や座禅など、気になるものはありますか？", "AskMore"),
        ("抹茶を点ててみたいです", "抹茶体験ですね。改めてお探しします。", "RequirementsComplete"),
    ],
    S.Interview2: [
        ("2つ目は雰囲気を変えたいです", "いいですね。自然や街歩きなど、どんな雰囲気がお好みですか？", "AskMore"),
        ("神社で静かにお参りしたいです", "神社巡りですね。1か所目との組み合わせでお探しします。", "RequirementsComplete"),
    ],
    S.Introduction2: [
        ("お願いします", "2か所目の候補はこちらの3か所です。1か所目からの距離も添えています。", "IntroDelivered"),
    ],
    S.Recommendation2: [
        ("近いところがいいな", "それでしたら、1か所目から歩いて回れるこちらがおすすめですよ。", "SpotDiscuss"),
        ("そこにします", "承知しました。2か所目はこちらに決定ですね。", "SpotAccepted"),
        ("やっぱりどれも違うかな", "かしこまりました。もう一度ご希望を伺いますね。", "AllSpotsRejected"),
    ],
    S.ResearchInterview2: [
        ("景色のいいところを追加で", "絶景スポットですね。山手と川沿い、どちらに惹かれますか？", "AskMore"),
        ("川沿いを歩きたいです", "川沿いの散策ですね。改めてお探しします。", "RequirementsComplete"),
    ],
    S.Closing: [
        ("それでお願いします", "ありがとうございます。こちらの2か所でプランを確定しますね。良いご旅行を！", "PlanConfirmed"),
        ("ありがとう、さようなら", "こちらこそありがとうございました。お気をつけて、いってらっしゃいませ。", "Farewell"),
    ],
}

# Safe act per state when the backend output stays malformed after retries.
# Interviews fall back to asking again; recommendations to another discussion
# turn; the turn caps still force progress, so fallback loops cannot wedge.
FALLBACK_ACTS: dict[ScenarioState, DialogueAct] = {
    S.Icebreaker: A.ChatContinue,
    S.Interview1: A.AskMore,
    S.Introduction1: A.IntroDelivered,
    S.Recommendation1: A.SpotDiscuss,
    S.ResearchInterview1: A.AskMore,
    S.Interview2: A.AskMore,
    S.Introduction2: A.IntroDelivered,
    S.Recommendation2: A.SpotDiscuss,
    S.ResearchInterview2: A.AskMore,
    S.Closing: A.PlanConfirmed,
}

FALLBACK_LINES: dict[ScenarioState, str] = {
    S.Icebreaker: "すみません、少し聞き取れませんでした。京都はお久しぶりですか？",
    S.Introduction1: "それでは、お調べした3つの観光スポットをご紹介しますね。",
    S.Introduction2: "それでは、2か所目の候補を3つご紹介しますね。",
    S.Recommendation1: "気になるスポットはございましたか？ご遠慮なくご相談くださいね。",
    S.Recommendation2: "2か所目はいかがなさいますか？距離もあわせてご検討くださいね。",
    S.Closing: "それでは、こちらの2か所でプランを確定いたしますね。本日はありがとうございました。",
}
_FALLBACK_INTERVIEW_LINE = "すみません、うまく伺えませんでした。もう少し詳しくご希望を教えていただけますか？"


def fallback_output(state: ScenarioState) -> GenerationOutput:
    act = FALLBACK_ACTS.get(state)
    if act is None:
        raise GenerationError(f"no generation happens in state {state.value}")
    text = FALLBACK_LINES.get(state, _FALLBACK_INTERVIEW_LINE)
    return GenerationOutput(response_text=text, act=act)


def build_prompt(
    state: ScenarioState,
    session: SessionRecord,
    catalog_view: GenreList | SpotDigest | None,
    context_turns: int = 8,
) -> PromptBundle:
    """Compose the per-state prompt bundle; a pure function of its inputs."""
    if state in INTERVIEW_STATES:
        if not isinstance(catalog_view, GenreList):
            raise MismatchedAuxiliary(f"{state.value} requires a GenreList")
    elif state in INTRODUCTION_STATES | RECOMMENDATION_STATES:
        if not isinstance(catalog_view, SpotDigest):
            raise MismatchedAuxiliary(f"{state.value} requires a SpotDigest")
        current = set(session.candidates_for(state))
        foreign = [r.spot_id for r in catalog_view.rows if r.spot_id not in current]
        if foreign:
            raise MismatchedAuxiliary(f"digest rows {foreign} are not current candidates")
    elif catalog_view is not None:
        raise MismatchedAuxiliary(f"{state.value} takes no catalog view")
    if state not in INSTRUCTIONS:
        raise GenerationError(f"no prompt is defined for state {state.value}")

    window = [(t.speaker, t.text) for t in session.transcript[-context_turns:]]
    return PromptBundle(
        state=state,
        instructions=INSTRUCTIONS[state],
        flow_description=FLOW_NOTES[state],
        few_shot_examples=list(STATE_EXAMPLES[state]),
        context_window=window,
        auxiliary=catalog_view,
    )


def build_spot_digest(candidates: list[Spot], first_spot_distance_km: dict[str, float] | None = None) -> SpotDigest:
    rows = []
    for spot in candidates:
        rows.append(SpotDigestRow(
            spot_id=spot.id,
            name=spot.name,
            reading=spot.reading,
            reason=_first_sentence(spot.description),
            genres=tuple(sorted(spot.genres)),
            distance_km=(first_spot_distance_km or {}).get(spot.id),
        ))
    return SpotDigest(rows=rows)


def _first_sentence(text: str) -> str:
    for terminator in ("。", ".", "!", "！"):
        idx = text.find(terminator)
        if idx != -1:
            return text[: idx + 1]
    return text


def parse_output(raw: str, state: ScenarioState) -> GenerationOutput | ParseFailure:
    """Parse the RESPONSE:/ACT: grammar; never raises."""
    if not isinstance(raw, str) or not raw:
        return ParseFailure("empty output")
    response: str | None = None
    for line in raw.splitlines():
        if response is None:
            if line.startswith("RESPONSE:"):
                response = line[len("RESPONSE:"):]
                if response.startswith(" "):
                    response = response[1:]
            continue
        if line.startswith("ACT:"):
            label = line[len("ACT:"):].strip()
            if not response.strip():
                return ParseFailure("empty response text")
            try:
                act = DialogueAct(label)
            except ValueError:
                return ParseFailure(f"unknown act label {label!r}")
            if act not in accepted_acts(state):
                return ParseFailure(f"act {label} not permitted in state {state.value}")
            return GenerationOutput(response_text=response, act=act)
    if response is None:
        return ParseFailure("no RESPONSE line")
    return ParseFailure("no ACT line")


def generate(
    bundle: PromptBundle,
    backend: GenerationBackend,
    turn_index: int = 1,
    retries: int = 2,
) -> GenerationOutput:
    """Call the backend and parse; retry malformed output, then fall back.

    Raises BackendUnavailable only when the final attempt failed at the
    transport level; parse failures always resolve to the fallback output.
    """
    request = BackendRequest(
        state_label=bundle.state.value,
        turn_index=turn_index,
        system_prompt=bundle.system_prompt(),
        user_context=bundle.user_context(),
    )
    last_transport_error: Exception | None = None
    for _ in range(retries + 1):
        try:
            raw = backend.complete(request)
        except BackendTransportError as exc:
            last_transport_error = exc
            continue
        last_transport_error = None
        result = parse_output(raw, bundle.state)
        if isinstance(result, GenerationOutput):
            return result
    if last_transport_error is not None:
        raise BackendUnavailable(str(last_transport_error)) from last_transport_error
    return fallback_output(bundle.state)


KEYWORD_INSTRUCTIONS = (
    "以下は旅行代理店での面談の会話です。お客様の希望を表す検索キーワードを1〜5個、"
    "重要な順に抽出してください。\n出力形式（厳守）:\nKEYWORDS: キーワード1, キーワード2"
)


def load_genre_list(path: str | Path | None = None) -> GenreList:
    raw = json.loads(Path(path or DATA_DIR / "genres.json").read_text(encoding="utf-8"))
    return GenreList(entries=[(row["name"], row["detail"]) for row in raw])


def load_keyword_lexicon(path: str | Path | None = None) -> dict[str, str]:
    """Surface form -> genre map used by the rule-based keyword fallback."""
    return json.loads(Path(path or DATA_DIR / "keyword_lexicon.json").read_text(encoding="utf-8"))


def extract_keywords(
    session: SessionRecord,
    slot: str,
    backend: GenerationBackend,
    turn_index: int = 1,
    lexicon: dict[str, str] | None = None,
    retries: int = 2,
) -> list[str]:
    """1-5 search keywords for the slot's interview; deterministic fallback.

    The backend is asked for a "KEYWORDS: a, b" line; malformed output (and
    transport failure) falls back to scanning the interview turns for keyword
    lexicon surface forms, so this step always succeeds.
    """
    texts = session.interview_texts_1 if slot == "first" else session.interview_texts_2
    if not texts:
        raise EmptyInterview(f"no user turns recorded for the {slot} interview")

    context = "\n".join(f"ユーザー: {t}" for t in texts) + "\n"
    request = BackendRequest(
        state_label=session.state.value,
        turn_index=turn_index,
        system_prompt=KEYWORD_INSTRUCTIONS + "\n",
        user_context=context,
    )
    for _ in range(retries + 1):
        try:
            raw = backend.complete(request)
        except BackendTransportError:
            continue
        keywords = _parse_keywords(raw)
        if keywords:
            return keywords
    return _lexicon_keywords(texts, lexicon if lexicon is not None else load_keyword_lexicon())


def _parse_keywords(raw: str) -> list[str]:
    for line in raw.splitlines():
        if not line.startswith("KEYWORDS:"):
            continue
        body = line[len("KEYWORDS:"):]
        parts = [p.strip() for chunk in body.split("、") for p in chunk.split(",")]
        seen: dict[str, None] = {}
        for part in parts:
            if part:
                seen.setdefault(part)
        if seen:
            return list(seen)[:5]
    return []


def _lexicon_keywords(texts: list[str], lexicon: dict[str, str]) -> list[str]:
    joined = normalize("。".join(texts))
    hits: list[tuple[int, str]] = []
    for surface in lexicon:
        pos = joined.find(normalize(surface))
        if pos != -1:
            hits.append((pos, surface))
    hits.sort()
    keywords = [surface for _, surface in hits][:5]
    return keywords or ["観光"]
