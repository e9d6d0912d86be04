"""
Order-k token Markov generator, the stand-in "simple bot" used to test the
pipeline against texts of known machine origin.
"""

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import DocLabel
from .errors import ValidationError

logger = logging.getLogger(__name__)

State = Tuple[str, ...]


class MarkovGenerator:
    """Token transition table of order k with seeded sampling."""

    def __init__(self, order: int = 2):
        if order < 1:
            raise ValidationError(f"Markov order must be >= 1, got {order}")
        self.order = order
        self.transitions: Dict[State, Tuple[List[str], np.ndarray]] = {}
        self.states: List[State] = []

    def fit(self, docs: Sequence[Sequence[str]]) -> 'MarkovGenerator':
        """Count transitions inside each document (never across documents)."""
        counts: Dict[State, Counter] = {}
        for tokens in docs:
            for i in range(len(tokens) - self.order):
                state = tuple(tokens[i:i + self.order])
                counts.setdefault(state, Counter())[tokens[i + self.order]] += 1
        if not counts:
            raise ValidationError(f"no document is longer than the Markov order {self.order}")

        self.transitions = {}
        for state, followers in counts.items():
            words = sorted(followers)
            weights = np.array([followers[w] for w in words], dtype=np.float64)
            self.transitions[state] = (words, weights / weights.sum())
        self.states = sorted(self.transitions)
        logger.info(f"Fitted order-{self.order} Markov model with {len(self.states)} states")
        return self

    def _random_state(self, rng: np.random.Generator) -> State:
        return self.states[int(rng.integers(len(self.states)))]

    def generate(self, length: int, rng: np.random.Generator,
                 prompt: Optional[Sequence[str]] = None) -> List[str]:
        """
        Sample ``length`` tokens.

        Continues from the last k prompt tokens when that state was seen,
        otherwise (and whenever the chain reaches an unseen state) restarts
        from a random known state, emitting its tokens.
        """
        if not self.states:
            raise ValidationError("generator has not been fitted")
        if length < 1:
            raise ValidationError(f"length must be >= 1, got {length}")

        tokens: List[str] = []
        state = tuple(prompt[-self.order:]) if prompt is not None and len(prompt) >= self.order else None
        if state not in self.transitions:
            state = self._random_state(rng)
            tokens.extend(state)

        while len(tokens) < length:
            if state not in self.transitions:
                state = self._random_state(rng)
                tokens.extend(state)
                continue
            words, probs = self.transitions[state]
            tokens.append(words[int(rng.choice(len(words), p=probs))])
            state = state[1:] + (tokens[-1],)
        return tokens[:length]


def generate_corpus(human_docs: Sequence[Tuple[str, Sequence[str]]], out_dir: Union[str, Path],
                    order: int = 2, seed: int = 0, prompt_every: Optional[int] = None,
                    length: Optional[int] = None) -> List[Dict]:
    """
    Write Markov texts fitted on the human documents, plus a manifest.

    Without ``prompt_every`` each human text gets one generated counterpart
    seeded by its opening words. With it, an abstract is generated at every
    ``prompt_every``-th word, seeded by the k words before it. Lengths match
    the source text unless ``length`` is given (abstracts default to
    ``prompt_every`` words).

    Returns:
        Manifest entries {id, path, label, source}
    """
    if not human_docs:
        raise ValidationError("no human documents to imitate")
    if prompt_every is not None and prompt_every < 1:
        raise ValidationError(f"prompt_every must be >= 1, got {prompt_every}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    generator = MarkovGenerator(order).fit([tokens for _, tokens in human_docs])

    entries = []
    for index, (doc_id, tokens) in enumerate(human_docs):
        rng = np.random.default_rng([seed, index])
        if prompt_every is None:
            jobs = [(f"{doc_id}-markov", tokens[:order], length or max(len(tokens), order + 1))]
        else:
            jobs = [(f"{doc_id}-markov-{j}", tokens[max(0, pos - order):pos], length or prompt_every)
                    for j, pos in enumerate(range(prompt_every, len(tokens), prompt_every), start=1)]
        for text_id, prompt, size in jobs:
            path = out_dir / f"{text_id}.txt"
            path.write_text(' '.join(generator.generate(size, rng, prompt)) + '\n', encoding='utf-8')
            entries.append({'id': text_id, 'path': path.name, 'label': DocLabel.BOT_SIMPLE.value,
                            'source': doc_id})

    with open(out_dir / 'manifest.json', 'w', encoding='utf-8') as f:
        json.dump(entries, f, indent=2, ensure_ascii=False)
    logger.info(f"Generated {len(entries)} Markov texts in {out_dir}")
    return entries
