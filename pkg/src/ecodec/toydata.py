"""Templated two-attribute dialogue corpus.

Every record pairs a one- or two-turn history with a response labeled for
emotion (six classes) and dialog act (four classes). Responses are built from
an act-specific frame (largely function words, shared across emotions) with
emotion-bearing slots, so the LM is confident on frame tokens and uncertain at
the content slots. A few rare emotion-marked variants of frame tokens give
the controller something to gain at confident positions too.

Regenerate the bundled file with::

    python -m ecodec.toydata --out src/ecodec/data/toy_dialogues.jsonl
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

DEFAULT_SEED = 20240611
DEFAULT_SIZE = 2000

EMOTION_WEIGHTS = {
    "happiness": 0.22,
    "surprise": 0.15,
    "sadness": 0.16,
    "anger": 0.16,
    "fear": 0.15,
    "disgust": 0.16,
}
ACT_WEIGHTS = {"inform": 0.40, "question": 0.28, "directive": 0.18, "commissive": 0.14}

# probabilities of the emotion-marked variant at each marker position
P_INTENSIFIER = 0.15
P_END_MARK = 0.15
P_INTERJECTION = 0.20
P_PLAIN_OPENER = 0.40

TOPICS = [
    "party", "exam", "movie", "trip", "job", "dinner", "game", "concert",
    "meeting", "house", "car", "dog", "weather", "news", "test", "interview",
    "food", "show", "class", "book",
]

ADJ = {
    "happiness": ["happy", "glad", "excited", "thrilled", "pleased", "delighted"],
    "sadness": ["sad", "upset", "depressed", "heartbroken", "down", "miserable"],
    "anger": ["angry", "mad", "furious", "annoyed", "irritated", "outraged"],
    "fear": ["scared", "afraid", "worried", "nervous", "terrified", "anxious"],
    "disgust": ["disgusted", "sickened", "revolted", "nauseous", "repulsed", "appalled"],
    "surprise": ["surprised", "amazed", "shocked", "stunned", "astonished", "speechless"],
}

JUDGE = {
    "happiness": ["great", "wonderful", "lovely", "fantastic", "perfect"],
    "sadness": ["terrible", "awful", "depressing", "hopeless", "tragic"],
    "anger": ["ridiculous", "unacceptable", "outrageous", "stupid", "infuriating"],
    "fear": ["scary", "frightening", "dangerous", "creepy", "risky"],
    "disgust": ["gross", "disgusting", "nasty", "filthy", "vile"],
    "surprise": ["unbelievable", "incredible", "unexpected", "shocking", "amazing"],
}

# Rare emotion-marked variants of otherwise fixed tokens. The intensifier and
# end mark sit where the LM is confident; the interjection opens the response,
# where it is not.
INTERJECTION = {"happiness": "yay", "sadness": "sigh", "anger": "ugh", "fear": "yikes", "disgust": "eww", "surprise": "wow"}
INTENSIFIER = {
    "happiness": "truly", "sadness": "deeply", "anger": "totally",
    "fear": "really", "disgust": "utterly", "surprise": "completely",
}
END_MARK = {"happiness": "!", "sadness": "...", "anger": "!", "fear": "?", "disgust": "!", "surprise": "!"}
PLAIN_OPENERS = ["well ,", "oh ,"]

# {a} emotion adjective, {j} judgement word, {t} topic, {i} intensifier, {e} end mark
FRAMES = {
    "inform": [
        "i am {i} {a} about the {t} {e}",
        "i feel {i} {a} about the {t} {e}",
        "the {t} was {i} {j} {e}",
        "i think the {t} is {i} {j} {e}",
    ],
    "question": [
        "are you {i} {a} about the {t} ?",
        "was the {t} {i} {j} ?",
        "is the {t} {i} {j} ?",
        "do you feel {i} {a} about the {t} ?",
    ],
    "directive": [
        "please tell me about the {j} {t} {e}",
        "you should see the {t} , it is {i} {j} {e}",
        "please do not be {i} {a} about the {t} {e}",
    ],
    "commissive": [
        "i will go to the {t} tomorrow , i am {i} {a} {e}",
        "i promise to fix the {j} {t} {e}",
        "sure , i can help with the {j} {t} {e}",
    ],
}

HISTORY = {
    "inform": ["how was the {t} ?", "what do you think of the {t} ?", "how do you feel about the {t} ?"],
    "question": ["i went to the {t} yesterday .", "i heard about the {t} .", "the {t} is next week ."],
    "directive": ["what should i do about the {t} ?", "i do not know what to do .", "any advice on the {t} ?"],
    "commissive": ["can you help me with the {t} ?", "will you come to the {t} ?", "could you look at the {t} ?"],
}
SMALL_TALK = ["hi there .", "hello .", "hey , how are you ?", "good morning ."]


def _pick(rng: random.Random, weights: dict[str, float]) -> str:
    keys = list(weights)
    return rng.choices(keys, weights=[weights[k] for k in keys])[0]


def make_example(rng: random.Random) -> dict:
    emotion = _pick(rng, EMOTION_WEIGHTS)
    act = _pick(rng, ACT_WEIGHTS)
    topic = rng.choice(TOPICS)
    intens = INTENSIFIER[emotion] if rng.random() < P_INTENSIFIER else "so"
    end = END_MARK[emotion] if rng.random() < P_END_MARK else "."
    body = rng.choice(FRAMES[act]).format(
        a=rng.choice(ADJ[emotion]), j=rng.choice(JUDGE[emotion]), t=topic, i=intens, e=end
    )
    parts = []
    u = rng.random()
    if u < P_INTERJECTION:
        parts.append(INTERJECTION[emotion] + " ,")
    elif u < P_INTERJECTION + P_PLAIN_OPENER:
        parts.append(rng.choice(PLAIN_OPENERS))
    parts.append(body)
    history = [rng.choice(HISTORY[act]).format(t=topic)]
    if rng.random() < 0.3:
        history.insert(0, rng.choice(SMALL_TALK))
    return {
        "history": history,
        "response": " ".join(parts),
        "attributes": {"emotion": emotion, "dialog-act": act},
    }


def generate(n: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> list[dict]:
    rng = random.Random(seed)
    return [make_example(rng) for _ in range(n)]


def write_jsonl(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def bundled_path() -> Path:
    return Path(__file__).with_name("data") / "toy_dialogues.jsonl"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(bundled_path()))
    ap.add_argument("-n", type=int, default=DEFAULT_SIZE)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args(argv)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(generate(args.n, args.seed), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
