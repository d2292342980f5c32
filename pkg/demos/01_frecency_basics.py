"""
Scoring a browser history with frecency
=======================================

A page's frecency adds up a recency weight times a visit-type weight over its
newest ten visits, then rescales by how many visits the page has in total.
"""

import numpy as np

from frecency_fl import DEFAULT_PARAMS, ModelParams, Page, Visit, VisitType, frecency
from frecency_fl.frecency import page_features, rank_pages, weight_outer

# Three pages: one typed yesterday, one clicked a lot last month, one bookmarked long ago.
pages = [
    Page(0, "https://news.example/", (Visit(1.0, VisitType.TYPED),), 1, False),
    Page(1, "https://docs.example/", tuple(Visit(20.0 + d, VisitType.FOLLOWED_LINK) for d in range(6)), 9, False),
    Page(2, "https://bank.example/", (Visit(120.0, VisitType.BOOKMARKED),), 4, True),
]

for page in pages:
    print(f"{page.url:24s} {frecency(page):8.1f}")

# The score is bilinear: a 15-value feature row per page times the outer
# product of recency and type weights. Ranking a whole history is one matmul.
features = np.stack([page_features(p) for p in pages])
scores = features @ weight_outer(DEFAULT_PARAMS)
print("ranked ids:", rank_pages(scores, np.array([p.id for p in pages])).tolist())

# Doubling every type weight doubles every score and keeps the order.
doubled = ModelParams(DEFAULT_PARAMS.recency_weights, tuple(2 * w for w in DEFAULT_PARAMS.type_weights))
print(np.allclose(features @ weight_outer(doubled), 2 * scores))
