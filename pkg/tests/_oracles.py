"""Independent straight-line recomputations used as test oracles.

Everything here works directly on raw triples with plain Python loops and
must stay decoupled from the library's graph construction code.
"""

import math


def reference_statistics(train_triples, num_users, num_items):
    """Per-user/item mean train ratings with global-mean fallback.

    Accumulates in row order so float results are comparable exactly.
    """
    user_sum = [0.0] * num_users
    user_cnt = [0] * num_users
    item_sum = [0.0] * num_items
    item_cnt = [0] * num_items
    total = 0.0
    for u, v, r in train_triples:
        user_sum[u] += float(r)
        user_cnt[u] += 1
        item_sum[v] += float(r)
        item_cnt[v] += 1
        total += float(r)
    global_mean = total / len(train_triples)
    user_mean = [
        user_sum[u] / user_cnt[u] if user_cnt[u] else global_mean
        for u in range(num_users)
    ]
    item_mean = [
        item_sum[v] / item_cnt[v] if item_cnt[v] else global_mean
        for v in range(num_items)
    ]
    return user_mean, item_mean, global_mean


def reference_views(train_triples, num_users, num_items, trust_edges, delta):
    """Recompute deviation levels, tie coefficients and social weights.

    Returns a dict with:
      user_view[u] = list of (item, level) in train order
      item_view[v] = list of (user, level) in train order
      coefficient[(i, j)] = tie strength per directed trust edge
      weights[i] = list of (neighbor, weight) in trust order
    """
    user_mean, item_mean, _ = reference_statistics(train_triples, num_users, num_items)

    user_view = {u: [] for u in range(num_users)}
    item_view = {v: [] for v in range(num_items)}
    rating_of = {}
    for u, v, r in train_triples:
        user_view[u].append((v, math.ceil(abs(r - item_mean[v]))))
        item_view[v].append((u, math.ceil(abs(r - user_mean[u]))))
        rating_of[(u, v)] = r

    items_of = {u: set() for u in range(num_users)}
    for u, v, _ in train_triples:
        items_of[u].add(v)

    coefficient = {}
    neighbors = {u: [] for u in range(num_users)}
    for i, j in trust_edges:
        common = items_of[i] & items_of[j]
        agree = sum(
            1 for v in common if abs(rating_of[(i, v)] - rating_of[(j, v)]) <= delta
        )
        coefficient[(i, j)] = 1 + agree
        neighbors[i].append(j)

    weights = {}
    for u, neigh in neighbors.items():
        if not neigh:
            weights[u] = []
            continue
        total = sum(coefficient[(u, k)] for k in neigh)
        weights[u] = [(k, coefficient[(u, k)] / total) for k in neigh]
    return {
        "user_view": user_view,
        "item_view": item_view,
        "coefficient": coefficient,
        "weights": weights,
    }


def _relu(x):
    return [max(0.0, value) for value in x]


def _mat_vec(matrix, vector):
    # matrix layout (in, out): result[j] = sum_i vector[i] * matrix[i][j]
    n_out = len(matrix[0])
    return [sum(vector[i] * matrix[i][j] for i in range(len(vector))) for j in range(n_out)]


def _add(a, b):
    return [x + y for x, y in zip(a, b)]


def reference_forward(user, item, neigh, bundle, arrays, rc_off=False,
                      sn_off=False, rd_raw=False, attention_mode="softmax",
                      alpha=1.0):
    """Scalar re-implementation of the prediction rule with plain loops.

    Works from raw parameter arrays (``ModelParams.arrays()``) and the same
    neighborhood provider as the library; no autodiff, no batching.
    """

    def encode(prefix, nb_row, level):
        pair = list(nb_row) + list(arrays["diff_embed"][level])
        hidden = _relu(_add(_mat_vec(arrays[f"{prefix}_w1"].tolist(), pair),
                            arrays[f"{prefix}_b1"].tolist()))
        return _add(_mat_vec(arrays[f"{prefix}_w2"].tolist(), hidden),
                    arrays[f"{prefix}_b2"].tolist())

    def attention_weights(prefix, encoded, self_row):
        scores = []
        for x in encoded:
            pair = list(x) + list(self_row)
            hidden = _relu(_add(_mat_vec(arrays[f"{prefix}_w1"].tolist(), pair),
                                arrays[f"{prefix}_b1"].tolist()))
            scores.append(
                _mat_vec(arrays[f"{prefix}_w2"].tolist(), hidden)[0]
                + arrays[f"{prefix}_b2"][0]
            )
        if attention_mode == "uniform_avg":
            return [1.0 / len(scores)] * len(scores)
        top = max(scores)
        exps = [math.exp(s - top) for s in scores]
        total = sum(exps)
        softmax = [e / total for e in exps]
        if attention_mode == "max":
            return [max(softmax)] * len(softmax)
        return softmax

    def offset(side, entity):
        if side == "user":
            nb_table, self_table = "item_embed", "user_embed"
            enc, att, agg = "enc_user", "att_user", "agg_user"
            neighbors, levels, ratings = (
                neigh.items_of_user(entity) if entity >= 0 else ([], [], [])
            )
        else:
            nb_table, self_table = "user_embed", "item_embed"
            enc, att, agg = "enc_item", "att_item", "agg_item"
            neighbors, levels, ratings = (
                neigh.users_of_item(entity) if entity >= 0 else ([], [], [])
            )
        if len(neighbors) == 0:
            aggregated = [0.0] * len(arrays[f"{agg}_b"])
        else:
            used_levels = [r - 1 for r in ratings] if rd_raw else list(levels)
            encoded = [
                encode(enc, arrays[nb_table][n], lv)
                for n, lv in zip(neighbors, used_levels)
            ]
            self_row = arrays[self_table][entity]
            weights = attention_weights(att, encoded, self_row)
            dim = len(encoded[0])
            aggregated = [
                sum(w * x[j] for w, x in zip(weights, encoded)) for j in range(dim)
            ]
        pre = _add(_mat_vec(arrays[f"{agg}_w"].tolist(), aggregated),
                   arrays[f"{agg}_b"].tolist())
        return [math.tanh(v) for v in pre]

    def head(h_u, h_v):
        pair = list(h_u) + list(h_v)
        z1 = [math.tanh(v) for v in _add(_mat_vec(arrays["head_w1"].tolist(), pair),
                                         arrays["head_b1"].tolist())]
        z2 = [math.tanh(v) for v in _add(_mat_vec(arrays["head_w2"].tolist(), z1),
                                         arrays["head_b2"].tolist())]
        return _mat_vec(arrays["head_w_out"].tolist(), z2)[0]

    h_item_vec = offset("item", item)
    own = head(offset("user", user), h_item_vec)
    neighbors, coeffs = (
        neigh.social_of_user(user) if (user >= 0 and not sn_off) else ([], [])
    )
    if len(neighbors) == 0:
        preference = own
    else:
        if rc_off:
            lam = [1.0 / len(coeffs)] * len(coeffs)
        else:
            total = float(sum(coeffs))
            lam = [c / total for c in coeffs]
        social = sum(
            w * head(offset("user", int(k)), h_item_vec)
            for k, w in zip(neighbors, lam)
        )
        preference = 0.5 * (own + social)
    global_mean = bundle.global_mean
    user_avg = bundle.user_avg[user] if user >= 0 else global_mean
    item_avg = bundle.item_avg[item] if item >= 0 else global_mean
    return (alpha * 0.5) * (user_avg + item_avg) + preference


def random_interaction_set(rng, num_users, num_items, n_ratings, n_trust):
    """Random unique rating triples plus directed trust edges (no loops)."""
    triples = []
    seen = set()
    while len(triples) < n_ratings:
        u = int(rng.integers(0, num_users))
        v = int(rng.integers(0, num_items))
        if (u, v) in seen:
            continue
        seen.add((u, v))
        triples.append((u, v, int(rng.integers(1, 6))))
    edges = []
    seen_edges = set()
    attempts = 0
    while len(edges) < n_trust and attempts < 50 * n_trust:
        attempts += 1
        i = int(rng.integers(0, num_users))
        j = int(rng.integers(0, num_users))
        if i == j or (i, j) in seen_edges:
            continue
        seen_edges.add((i, j))
        edges.append((i, j))
    return triples, edges
