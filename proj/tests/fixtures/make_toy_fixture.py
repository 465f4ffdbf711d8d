#!/usr/bin/env python3
"""Regenerates the toy pipeline fixture in tests/fixtures/toy/.

Bot turns that ask a question tend to get longer, warmer human replies, so
the length and sentiment signals carry something a classifier can learn.
"""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "toy"
rng = random.Random(20240611)

QUESTIONS = [
    "what do you like to do on weekends?",
    "tell me about your favorite book?",
    "how was your trip to the coast?",
    "what kind of music do you enjoy?",
    "do you have any pets at home?",
    "what are you cooking tonight?",
]
STATEMENTS = [
    "i see.",
    "ok.",
    "that is a thing.",
    "the weather exists.",
    "i am a bot.",
    "hmm.",
]
WARM = ["love", "great", "wonderful", "happy", "fun", "enjoy", "amazing"]
COLD = ["hate", "boring", "awful", "sad", "annoying", "bad"]
FILLER = ["really", "the", "my", "friends", "and", "i", "we", "weekend", "music",
          "book", "dog", "cooking", "trip", "park", "with", "often", "usually"]


def human_reply(asked):
    if asked:
        n = rng.randint(5, 14)
        mood = WARM if rng.random() < 0.75 else COLD
    else:
        n = rng.randint(1, 6)
        mood = COLD if rng.random() < 0.6 else WARM
    words = [rng.choice(FILLER) for _ in range(n)]
    words.insert(rng.randrange(len(words) + 1), rng.choice(mood))
    return " ".join(words) + "."


def episode(i):
    turns = []
    n_bot = rng.randint(2, 6)
    for t in range(n_bot):
        asked = rng.random() < 0.5
        turns.append({"speaker": "bot", "text": rng.choice(QUESTIONS if asked else STATEMENTS)})
        # Questions keep people around; flat statements sometimes end the chat.
        if t == n_bot - 1 and rng.random() < (0.3 if asked else 0.6):
            break
        turns.append({"speaker": "human", "text": human_reply(asked)})
    rec = {"id": f"toy-{i:03d}", "turns": turns}
    if i % 7 == 0:
        rec["context"] = "your persona: i like hiking and old movies."
    return rec


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(episode(i)) for i in range(50)]
    lines.insert(10, '{"id": "broken-1", "turns": [{"speaker": "human", "text": "hi"}]}')
    lines.insert(25, '{"id": "broken-2", "turns": [')
    (OUT / "episodes.jsonl").write_text("\n".join(lines) + "\n")

    sent = ["# token<TAB>label"]
    sent += [f"{w}\tpositive" for w in WARM]
    sent += [f"{w}\tnegative" for w in COLD]
    (OUT / "sentiment.tsv").write_text("\n".join(sent) + "\n")
    react = ["# token<TAB>label"]
    react += [f"{w}\tjoy" for w in ["love", "happy", "fun", "amazing", "wonderful"]]
    react += [f"{w}\tanger" for w in ["hate", "annoying"]]
    react += [f"{w}\tsadness" for w in ["sad", "awful"]]
    (OUT / "reaction.tsv").write_text("\n".join(react) + "\n")

    rows = ["# prev<TAB>next<TAB>weight"]
    starts = {"what": 3, "tell": 2, "ok.": 2, "i": 2}
    rows += [f"<s>\t{w}\t{c}" for w, c in starts.items()]
    grammar = {
        "what": {"do": 2, "music": 1},
        "do": {"you": 1},
        "you": {"like?": 2, "enjoy?": 1, "think.": 1},
        "music": {"do": 1},
        "tell": {"me": 1},
        "me": {"more?": 2, "about": 1},
        "about": {"it.": 1, "you?": 1},
        "i": {"see.": 2, "like": 1},
        "like": {"music.": 1, "you.": 1},
    }
    for prev, nxt in grammar.items():
        rows += [f"{prev}\t{w}\t{c}" for w, c in nxt.items()]
    for end in ["like?", "enjoy?", "think.", "more?", "it.", "you?", "see.", "music.",
                "you.", "ok."]:
        rows.append(f"{end}\t</s>\t1")
    (OUT / "generator.tsv").write_text("\n".join(rows) + "\n")

    hist = []
    for i in range(8):
        ep = episode(100 + i)
        turns = ep["turns"]
        cut = 2 * rng.randint(1, max(1, len(turns) // 2))
        turns = turns[:cut]
        if len(turns) % 2:
            turns = turns[:-1]
        hist.append(json.dumps({"id": f"hist-{i}", "turns": turns}))
    (OUT / "histories.jsonl").write_text("\n".join(hist) + "\n")


if __name__ == "__main__":
    main()
