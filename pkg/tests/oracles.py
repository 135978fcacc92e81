"""Independent brute-force oracles used to cross-check the library.

Everything here is deliberately slow and literal: exhaustive threshold
sweeps, exhaustive speaker-mapping search, exhaustive partition search.
Nothing imports the implementation paths it checks.
"""

from itertools import permutations, product
from math import comb


# --- verification metrics -------------------------------------------------


def oracle_eer(scores, labels):
    """EER by a literal threshold sweep with linear interpolation."""
    targets = sorted(s for s, l in zip(scores, labels) if l)
    nontargets = sorted(s for s, l in zip(scores, labels) if not l)
    assert targets and nontargets

    def frr(t):
        return sum(1 for s in targets if s < t) / len(targets)

    def far(t):
        return sum(1 for s in nontargets if s >= t) / len(nontargets)

    points = [(0.0, 1.0)]
    for t in sorted(set(scores)) + [max(scores) + 1.0]:
        points.append((frr(t), far(t)))
    prev = points[0]
    for frr_i, far_i in points[1:]:
        d = frr_i - far_i
        if d >= 0:
            if d == 0:
                return frr_i
            d_prev = prev[0] - prev[1]
            alpha = -d_prev / (d - d_prev)
            return prev[0] + alpha * (frr_i - prev[0])
        prev = (frr_i, far_i)
    raise AssertionError("no crossing found")


def oracle_min_dcf(scores, labels, p_target=0.05, c_miss=1.0, c_fa=1.0):
    targets = [s for s, l in zip(scores, labels) if l]
    nontargets = [s for s, l in zip(scores, labels) if not l]
    assert targets and nontargets
    thresholds = [min(scores) - 1.0] + sorted(set(scores)) + [max(scores) + 1.0]
    best = None
    for t in thresholds:
        p_miss = sum(1 for s in targets if s < t) / len(targets)
        p_fa = sum(1 for s in nontargets if s >= t) / len(nontargets)
        cost = c_miss * p_target * p_miss + c_fa * (1 - p_target) * p_fa
        if best is None or cost < best:
            best = cost
    return best / min(c_miss * p_target, c_fa * (1 - p_target))


# --- diarization metrics -----------------------------------------------------


def _us(t):
    return int(round(t * 1_000_000))


def _merge_us(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged if b > a]


def _oracle_cells(ref_turns, hyp_turns, collar):
    """Elementary (length, ref_set, hyp_set) cells outside the collar zones."""
    ref = {}
    for t in ref_turns:
        ref.setdefault(t.speaker, []).append((_us(t.onset), _us(t.onset + t.duration)))
    hyp = {}
    for t in hyp_turns:
        hyp.setdefault(t.speaker, []).append((_us(t.onset), _us(t.onset + t.duration)))
    ref = {s: _merge_us(v) for s, v in ref.items()}
    hyp = {s: _merge_us(v) for s, v in hyp.items()}

    c = _us(collar)
    excluded = []
    if c > 0:
        for ivs in ref.values():
            for a, b in ivs:
                excluded.append((a - c, a + c))
                excluded.append((b - c, b + c))
    excluded = _merge_us(excluded)

    edges = set()
    for ivs in list(ref.values()) + list(hyp.values()) + [excluded]:
        for a, b in ivs:
            edges.add(a)
            edges.add(b)
    edges = sorted(edges)

    def covered(x, ivs):
        return any(a <= x < b for a, b in ivs)

    cells = []
    for lo, hi in zip(edges, edges[1:]):
        mid = lo  # cells are elementary, membership constant; probe the left edge
        if covered(mid, excluded):
            continue
        r = frozenset(s for s, ivs in ref.items() if covered(mid, ivs))
        h = frozenset(s for s, ivs in hyp.items() if covered(mid, ivs))
        if r or h:
            cells.append((hi - lo, r, h))
    return cells, sorted(ref), sorted(hyp)


def _all_max_mappings(cells, ref_names, hyp_names):
    """All injective ref->hyp mappings maximizing total overlap."""
    weight = {}
    for length, r, h in cells:
        for rs in r:
            for hs in h:
                weight[(rs, hs)] = weight.get((rs, hs), 0) + length

    n_map = min(len(ref_names), len(hyp_names))
    best, best_maps = -1, []
    hyp_pads = list(hyp_names) + [None] * (len(ref_names) - n_map)
    for perm in set(permutations(hyp_pads, len(ref_names))):
        mapping = {r: h for r, h in zip(ref_names, perm) if h is not None}
        total = sum(weight.get((r, h), 0) for r, h in mapping.items())
        if total > best:
            best, best_maps = total, [mapping]
        elif total == best:
            best_maps.append(mapping)
    return best_maps


def oracle_der(ref_turns, hyp_turns, collar):
    """(miss, fa, confusion, scored) in seconds via exhaustive mapping search."""
    by_rec = {}
    for t in ref_turns:
        by_rec.setdefault(t.recording, ([], []))[0].append(t)
    for t in hyp_turns:
        by_rec.setdefault(t.recording, ([], []))[1].append(t)

    miss = fa = conf = scored = 0
    for rec in sorted(by_rec):
        rturns, hturns = by_rec[rec]
        cells, ref_names, hyp_names = _oracle_cells(rturns, hturns, collar)
        mappings = _all_max_mappings(cells, ref_names, hyp_names)
        mapping = mappings[0]
        for length, r, h in cells:
            n_correct = sum(1 for rs in r if mapping.get(rs) in h)
            scored += length * len(r)
            miss += length * max(0, len(r) - len(h))
            fa += length * max(0, len(h) - len(r))
            conf += length * (min(len(r), len(h)) - n_correct)
    assert scored > 0
    return miss / 1e6, fa / 1e6, conf / 1e6, scored / 1e6


def oracle_jer(ref_turns, hyp_turns, collar):
    """Mean per-reference-speaker Jaccard error under a max-overlap mapping.

    Returns the set of JER values over all tie-equivalent optimal mappings
    (singleton when the optimum is unique).
    """
    by_rec = {}
    for t in ref_turns:
        by_rec.setdefault(t.recording, ([], []))[0].append(t)
    for t in hyp_turns:
        by_rec.setdefault(t.recording, ([], []))[1].append(t)

    per_rec_options = []
    for rec in sorted(by_rec):
        rturns, hturns = by_rec[rec]
        cells, ref_names, hyp_names = _oracle_cells(rturns, hturns, collar)
        mappings = _all_max_mappings(cells, ref_names, hyp_names)

        def durations(names, side):
            out = {s: 0 for s in names}
            for length, r, h in cells:
                for s in (r if side == "ref" else h):
                    out[s] += length
            return out

        ref_dur = durations(ref_names, "ref")
        hyp_dur = durations(hyp_names, "hyp")
        weight = {}
        for length, r, h in cells:
            for rs in r:
                for hs in h:
                    weight[(rs, hs)] = weight.get((rs, hs), 0) + length

        options = []
        for mapping in mappings:
            errors = []
            for rs in ref_names:
                hs = mapping.get(rs)
                if hs is None:
                    errors.append(1.0)
                    continue
                inter = weight.get((rs, hs), 0)
                union = ref_dur[rs] + hyp_dur[hs] - inter
                errors.append(0.0 if union == 0 else 1.0 - inter / union)
            options.append(tuple(errors))
        per_rec_options.append(sorted(set(options)))

    jers = set()
    for combo in product(*per_rec_options):
        flat = [e for errors in combo for e in errors]
        jers.add(sum(flat) / len(flat))
    return jers


# --- clustering ------------------------------------------------------------------


def oracle_kmeans_distortion(points, k):
    """Global minimum sum of squared distances over all k-partitions."""
    n = len(points)
    dim = len(points[0])
    best = None
    for assign in product(range(k), repeat=n):
        if len(set(assign)) < k:
            continue
        total = 0.0
        for c in range(k):
            members = [points[i] for i in range(n) if assign[i] == c]
            centroid = [sum(col) / len(members) for col in zip(*members)]
            total += sum(
                sum((x[d] - centroid[d]) ** 2 for d in range(dim)) for x in members
            )
        if best is None or total < best:
            best = total
    return best


def adjusted_rand_index(labels_a, labels_b):
    """ARI from the pair-counting contingency table."""
    assert len(labels_a) == len(labels_b)
    n = len(labels_a)
    table = {}
    for a, b in zip(labels_a, labels_b):
        table[(a, b)] = table.get((a, b), 0) + 1
    a_sizes = {}
    b_sizes = {}
    for (a, b), cnt in table.items():
        a_sizes[a] = a_sizes.get(a, 0) + cnt
        b_sizes[b] = b_sizes.get(b, 0) + cnt
    sum_cells = sum(comb(c, 2) for c in table.values())
    sum_a = sum(comb(c, 2) for c in a_sizes.values())
    sum_b = sum(comb(c, 2) for c in b_sizes.values())
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)
