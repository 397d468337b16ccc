"""Keyword-separable toy corpora and random embeddings for demos and tests.

Every text holds exactly one keyword of its class among shared filler
words, so a width-1 convolution (or any reader that spots the keyword)
classifies perfectly.
"""

from __future__ import annotations

import numpy as np

from .corpus import LabeledExample, LabelSpace

FILLERS = (
    "hôm nay trời nắng đẹp mình đi học về nhà ăn cơm xem phim nghe nhạc bạn bè gặp nhau "
    "sáng chiều tối đường phố công viên quán cà phê điện thoại máy tính sách vở lớp thầy cô"
).split()

KEYWORDS = {
    "ENJOYMENT": ("vui", "thích", "tuyệt"),
    "SADNESS": ("buồn", "khóc", "tiếc"),
    "ANGER": ("giận", "bực", "ghét"),
    "FEAR": ("sợ", "hãi", "lo"),
    "SURPRISE": ("bất", "ngờ", "ồ"),
}


def keyword_corpus(n=500, n_classes=3, seed=0, min_len=4, max_len=10, keywords_per_class=1):
    """Return ``(examples, label_space)`` with classes dealt round-robin (balanced)."""
    labels = tuple(list(KEYWORDS)[:n_classes])
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        label = i % n_classes
        length = int(rng.integers(min_len, max_len + 1))
        words = [FILLERS[j] for j in rng.integers(0, len(FILLERS), size=length - 1)]
        keys = KEYWORDS[labels[label]][:keywords_per_class]
        words.insert(int(rng.integers(0, length)), keys[int(rng.integers(0, len(keys)))])
        examples.append(LabeledExample(i, " ".join(words), label))
    return examples, LabelSpace(labels)


def random_vectors(tokens, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    return {t: rng.normal(0.0, 1.0, size=dim) for t in tokens}


def corpus_vocabulary(n_classes=3, keywords_per_class=1):
    words = list(dict.fromkeys(FILLERS))
    for label in list(KEYWORDS)[:n_classes]:
        words.extend(KEYWORDS[label][:keywords_per_class])
    return words
