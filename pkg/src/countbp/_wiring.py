"""Vectorized sum-product kernel shared by the ground and counting engines.

An edge joins one factor slot to one variable and carries a multiplicity:
1 on a ground graph, the cluster count on a compressed one. Variable-side
products are taken in log space as ``sum(count * log msg)`` with zeros
tracked separately, which covers the plain leave-one-out product and the
count-exponentiated one with the same code. Messages are padded to the
largest cardinality; padded states are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContradictionError


@dataclass
class _Bucket:
    arity: int
    tables: np.ndarray  # (n, K, ..., K)
    slot_edge: np.ndarray  # (n, arity) edge feeding each slot
    owner_rows: list  # per slot: rows whose slot computes an edge message
    owner_edges: list  # per slot: the edges those rows compute


class Wiring:
    """Edge arrays plus factor tables grouped by arity.

    ``factors`` is a sequence of ``(table, slot_edges, owned)`` where
    ``table`` has one axis per slot, ``slot_edges[q]`` is the edge whose
    variable-to-factor message enters slot ``q`` and ``owned[q]`` says whether
    slot ``q`` produces the factor-to-variable message of that edge. Every
    edge must be owned exactly once.
    """

    def __init__(self, cards, edge_var, edge_count, factors):
        self.cards = np.asarray(cards, dtype=np.int64)
        self.num_vars = len(self.cards)
        self.K = int(self.cards.max()) if self.num_vars else 2
        self.edge_var = np.asarray(edge_var, dtype=np.int64)
        self.edge_count = np.asarray(edge_count, dtype=np.float64)
        self.num_edges = E = len(self.edge_var)
        K = self.K

        states = np.arange(K)
        self.var_valid = states[None, :] < self.cards[:, None]
        self.edge_valid = self.var_valid[self.edge_var] if E else np.zeros((0, K), dtype=bool)
        self.incidence = sp.csr_matrix(
            (self.edge_count, (self.edge_var, np.arange(E))), shape=(self.num_vars, E)
        )

        by_arity: dict[int, list] = {}
        owned_total = np.zeros(E, dtype=np.int64)
        for table, slot_edges, owned in factors:
            table = np.asarray(table, dtype=np.float64)
            if not table.sum() > 0:
                raise ContradictionError("a factor table is all zero (contradictory evidence or empty clause)")
            padded = np.zeros((K,) * table.ndim)
            padded[tuple(slice(0, s) for s in table.shape)] = table
            by_arity.setdefault(table.ndim, []).append((padded, list(slot_edges), list(owned)))
            for e, o in zip(slot_edges, owned):
                if o:
                    owned_total[e] += 1
        if E and not np.all(owned_total == 1):
            raise ValueError("every edge must be produced by exactly one factor slot")

        self.buckets = []
        for arity in sorted(by_arity):
            items = by_arity[arity]
            tables = np.stack([t for t, _, _ in items])
            slot_edge = np.array([s for _, s, _ in items], dtype=np.int64).reshape(len(items), arity)
            owned = np.array([o for _, _, o in items], dtype=bool).reshape(len(items), arity)
            rows = [np.flatnonzero(owned[:, q]) for q in range(arity)]
            edges = [slot_edge[r, q] for q, r in enumerate(rows)]
            self.buckets.append(_Bucket(arity, tables, slot_edge, rows, edges))

    def uniform(self) -> np.ndarray:
        m = self.edge_valid.astype(np.float64)
        return m / m.sum(axis=1, keepdims=True) if self.num_edges else m

    # -- message kernels ------------------------------------------------------

    def factor_to_var(self, v2f: np.ndarray, mask: np.ndarray | None = None):
        """Fresh normalized factor-to-variable messages.

        Returns ``(edges, messages)`` for all edges, or those selected by
        the boolean ``mask``.
        """
        out_e, out_m = [], []
        K = self.K
        for b in self.buckets:
            for p in range(b.arity):
                rows, eds = b.owner_rows[p], b.owner_edges[p]
                if mask is not None:
                    sel = mask[eds]
                    rows, eds = rows[sel], eds[sel]
                if rows.size == 0:
                    continue
                t = b.tables[rows]
                # contract the other slots from the last one down so axis ids stay valid
                for q in range(b.arity - 1, -1, -1):
                    if q == p:
                        continue
                    m = v2f[b.slot_edge[rows, q]]
                    shape = [rows.size] + [1] * (t.ndim - 1)
                    shape[q + 1] = K
                    t = (t * m.reshape(shape)).sum(axis=q + 1)
                out_e.append(eds)
                out_m.append(t.reshape(rows.size, K))
        if not out_e:
            return np.zeros(0, dtype=np.int64), np.zeros((0, K))
        return np.concatenate(out_e), _normalize(np.concatenate(out_m))

    def _log_parts(self, f2v):
        zero = f2v <= 0.0
        logm = np.log(np.where(zero, 1.0, f2v))
        return logm, zero.astype(np.float64)

    def var_to_factor(self, f2v: np.ndarray, mask: np.ndarray | None = None):
        """Fresh normalized variable-to-factor messages.

        The product over the variable's incoming messages is raised to the
        edge counts and one copy of the target edge's own message is removed.
        """
        eds = np.arange(self.num_edges) if mask is None else np.flatnonzero(mask)
        if eds.size == 0:
            return eds, np.zeros((0, self.K))
        logm, zero = self._log_parts(f2v)
        ev = self.edge_var[eds]
        if mask is None:
            S, Z = self.incidence @ logm, self.incidence @ zero
            Se, Ze = S[ev], Z[ev]
        else:
            need, pos = np.unique(ev, return_inverse=True)
            sub = self.incidence[need]
            Se, Ze = (sub @ logm)[pos], (sub @ zero)[pos]
        Se = Se - logm[eds]
        Ze = Ze - zero[eds]
        ok = self.edge_valid[eds] & (Ze < 0.5)
        return eds, _exp_normalize(np.where(ok, Se, -np.inf))

    def beliefs(self, f2v: np.ndarray) -> np.ndarray:
        """Normalized count-weighted product of incoming messages, per variable."""
        logm, zero = self._log_parts(f2v)
        S, Z = self.incidence @ logm, self.incidence @ zero
        ok = self.var_valid & (Z < 0.5)
        return _exp_normalize(np.where(ok, S, -np.inf))


def _normalize(m: np.ndarray) -> np.ndarray:
    s = m.sum(axis=1)
    if not np.all(s > 0):
        raise ContradictionError("all-zero message")
    return m / s[:, None]


def _exp_normalize(logv: np.ndarray) -> np.ndarray:
    if logv.shape[0] == 0:
        return np.exp(logv)
    mx = logv.max(axis=1)
    if not np.all(np.isfinite(mx)):
        raise ContradictionError("all-zero product of incoming messages")
    return _normalize(np.exp(logv - mx[:, None]))


class MessagePassing:
    """Mutable message state of one run over a :class:`Wiring`.

    ``layers`` selects the schedule: ``None`` floods, otherwise it is an
    ordered list of variable-id arrays swept forwards then backwards, with
    the variables of one layer updated together.
    """

    def __init__(self, wiring: Wiring, damping: float, layers=None):
        self.w = wiring
        self.damping = float(damping)
        self.v2f = wiring.uniform()
        self.f2v = wiring.uniform()
        # an edge's first update has nothing to damp against
        self._v2f_set = np.zeros(wiring.num_edges, dtype=bool)
        self._f2v_set = np.zeros(wiring.num_edges, dtype=bool)
        self.messages = 0
        self.sweeps = 0
        self.residual = np.inf
        self.layer_masks = None
        if layers is not None:
            self.layer_masks = []
            for layer in layers:
                in_layer = np.zeros(wiring.num_vars, dtype=bool)
                in_layer[np.asarray(layer, dtype=np.int64)] = True
                self.layer_masks.append(in_layer[wiring.edge_var])

    def _damp(self, store, seen, eds, fresh):
        if eds.size == 0:
            return 0.0
        old = store[eds]
        d = self.damping
        if d == 0.0:
            new = fresh
        else:
            keep = np.where(seen[eds], d, 0.0)[:, None]
            new = _normalize((1.0 - keep) * fresh + keep * old)
        seen[eds] = True
        store[eds] = new
        return float(np.abs(new - old).max())

    def sweep(self) -> float:
        w = self.w
        res = 0.0
        if self.layer_masks is None:
            res = max(res, self._damp(self.v2f, self._v2f_set, *w.var_to_factor(self.f2v)))
            res = max(res, self._damp(self.f2v, self._f2v_set, *w.factor_to_var(self.v2f)))
            self.messages += 2 * w.num_edges
        else:
            order = self.layer_masks + self.layer_masks[::-1]
            for mask in order:
                res = max(res, self._damp(self.f2v, self._f2v_set, *w.factor_to_var(self.v2f, mask)))
                res = max(res, self._damp(self.v2f, self._v2f_set, *w.var_to_factor(self.f2v, mask)))
                self.messages += 2 * int(mask.sum())
        self.sweeps += 1
        self.residual = res
        return res

    def beliefs(self) -> np.ndarray:
        return self.w.beliefs(self.f2v)
