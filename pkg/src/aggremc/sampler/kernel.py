"""Compiled inner loops of the blocked Metropolis-within-Gibbs sampler.

Everything here works on flat arrays.  Random numbers come from a buffer of
U[0, 1) draws filled by a NumPy ``Generator`` and are consumed strictly in
order, so results depend only on the seed.

Association adjacency (per RV ``j``): entries ``as_nbr``/``as_kind``/
``as_lo``/``as_hi`` say ``y_j + y_k`` (kind 0) or ``y_j - y_k`` (kind 1) lies
in ``[lo, hi]``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DENSITY_FLOOR = 1e-12
FEAS_TOL = 1e-9


@njit(cache=True)
def _implied_range(j, y, determined, as_ptr, as_nbr, as_kind, as_lo, as_hi):
    lo = -np.inf
    hi = np.inf
    has = False
    for e in range(as_ptr[j], as_ptr[j + 1]):
        k = as_nbr[e]
        if not determined[k]:
            continue
        has = True
        if as_kind[e] == 0:
            a = as_lo[e] - y[k]
            b = as_hi[e] - y[k]
        else:
            a = y[k] + as_lo[e]
            b = y[k] + as_hi[e]
        if a > lo:
            lo = a
        if b < hi:
            hi = b
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    return has, lo, hi


@njit(cache=True)
def _density(x, has, lo, hi, beta):
    if not has or lo > hi:
        return 1.0
    inside = 0.0
    if lo <= x <= hi:
        inside = 1.0 / max(hi - lo, DENSITY_FLOOR)
    return beta * inside + (1.0 - beta)


@njit(cache=True)
def propose_block(
    members, y, prop, beta, hastings,
    as_ptr, as_nbr, as_kind, as_lo, as_hi,
    rv_group, grp_ptr, grp_rv,
    in_block, determined, pending, outside, frontier, in_frontier, changed,
    u, pos,
):
    """Draw a joint proposal for one block (the BlockSample procedure).

    Writes proposed values into ``prop`` for every RV listed in
    ``changed[:n_changed]``.  Returns ``(n_changed, feasible, log_q_fwd,
    log_q_rev, n_fallback, pos)``.  Sum-constraint groups are kept feasible
    by completion: the last undetermined member of a group inside the block
    is set to one minus the others; a group that also has members outside
    the block absorbs the change in its highest-index outside member.
    """
    k = members.shape[0]
    for i in range(k):
        j = members[i]
        in_block[j] = True
    for i in range(k):
        g = rv_group[members[i]]
        if g >= 0:
            pending[g] = 0
            outside[g] = 0
    for i in range(k):
        g = rv_group[members[i]]
        if g >= 0:
            pending[g] += 1
    for i in range(k):
        g = rv_group[members[i]]
        if g >= 0 and outside[g] == 0 and pending[g] > 0:
            cnt = 0
            for e in range(grp_ptr[g], grp_ptr[g + 1]):
                if not in_block[grp_rv[e]]:
                    cnt += 1
            outside[g] = cnt if cnt > 0 else -1

    log_fwd = 0.0
    log_rev = 0.0
    n_fallback = 0
    n_changed = 0
    nf = 0
    first = members[min(int(u[pos] * k), k - 1)]
    pos += 1
    frontier[0] = first
    in_frontier[first] = True
    nf = 1
    feasible = True
    while nf > 0:
        if n_changed == 0:
            idx = 0
        else:
            idx = min(int(u[pos] * nf), nf - 1)
            pos += 1
        j = frontier[idx]
        frontier[idx] = frontier[nf - 1]
        nf -= 1
        in_frontier[j] = False

        g = rv_group[j]
        if g >= 0 and outside[g] == -1 and pending[g] == 1:
            total = 0.0
            for e in range(grp_ptr[g], grp_ptr[g + 1]):
                o = grp_rv[e]
                if o != j:
                    total += prop[o]
            prop[j] = 1.0 - total
        else:
            has, lo, hi = _implied_range(j, prop, determined, as_ptr, as_nbr, as_kind, as_lo, as_hi)
            coin = u[pos]
            draw = u[pos + 1]
            pos += 2
            if has and lo > hi:
                n_fallback += 1
                prop[j] = draw
            elif has and coin < beta:
                prop[j] = lo + (hi - lo) * draw
            else:
                prop[j] = draw
            if hastings:
                log_fwd += np.log(_density(prop[j], has, lo, hi, beta))
                has_r, lo_r, hi_r = _implied_range(j, y, determined, as_ptr, as_nbr, as_kind, as_lo, as_hi)
                log_rev += np.log(_density(y[j], has_r, lo_r, hi_r, beta))
        if g >= 0:
            pending[g] -= 1
        determined[j] = True
        changed[n_changed] = j
        n_changed += 1
        for e in range(as_ptr[j], as_ptr[j + 1]):
            nb = as_nbr[e]
            if in_block[nb] and not determined[nb] and not in_frontier[nb]:
                frontier[nf] = nb
                in_frontier[nb] = True
                nf += 1

    n_in_block = n_changed
    # groups straddling the block boundary: complete an outside member
    for i in range(n_in_block):
        g = rv_group[changed[i]]
        if g < 0 or outside[g] <= 0:
            continue
        target = -1
        for e in range(grp_ptr[g], grp_ptr[g + 1]):
            o = grp_rv[e]
            if not in_block[o] and o > target:
                target = o
        total = 0.0
        for e in range(grp_ptr[g], grp_ptr[g + 1]):
            o = grp_rv[e]
            if o == target:
                continue
            total += prop[o] if in_block[o] else y[o]
        prop[target] = 1.0 - total
        changed[n_changed] = target
        n_changed += 1
        outside[g] = 0   # handled once per group

    for i in range(n_changed):
        j = changed[i]
        v = prop[j]
        if v < -FEAS_TOL or v > 1.0 + FEAS_TOL:
            feasible = False
        elif v < 0.0:
            prop[j] = 0.0
        elif v > 1.0:
            prop[j] = 1.0

    for i in range(k):
        j = members[i]
        in_block[j] = False
        determined[j] = False
    return n_changed, feasible, log_fwd, log_rev, n_fallback, pos


@njit(cache=True)
def _local_energy(y, pots, n_pots, pot_ptr, term_rv, term_coef, pot_const, pot_weight, pot_power):
    total = 0.0
    for i in range(n_pots):
        r = pots[i]
        lin = pot_const[r]
        for t in range(pot_ptr[r], pot_ptr[r + 1]):
            lin += term_coef[t] * y[term_rv[t]]
        if lin > 0.0:
            if pot_power[r] == 2:
                total += pot_weight[r] * lin * lin
            else:
                total += pot_weight[r] * lin
    return total


@njit(cache=True)
def sweep(
    y, prop, beta, hastings,
    blk_ptr, blk_rv,
    as_ptr, as_nbr, as_kind, as_lo, as_hi,
    rv_group, grp_ptr, grp_rv,
    pot_ptr, term_rv, term_coef, pot_const, pot_weight, pot_power, inc_ptr, inc_pot,
    u,
    accepts, infeasible, fallbacks,
    in_block, determined, pending, outside, frontier, in_frontier, changed,
    pot_mark, pots, old,
):
    """One Gibbs sweep: a Metropolis step for every block, in block order."""
    n_blocks = blk_ptr.shape[0] - 1
    pos = 0
    for b in range(n_blocks):
        members = blk_rv[blk_ptr[b]:blk_ptr[b + 1]]
        n_changed, feasible, log_fwd, log_rev, n_fb, pos = propose_block(
            members, y, prop, beta, hastings,
            as_ptr, as_nbr, as_kind, as_lo, as_hi,
            rv_group, grp_ptr, grp_rv,
            in_block, determined, pending, outside, frontier, in_frontier, changed,
            u, pos,
        )
        fallbacks[b] += n_fb
        u_acc = u[pos]
        pos += 1
        if not feasible:
            infeasible[b] += 1
            continue
        n_pots = 0
        for i in range(n_changed):
            j = changed[i]
            for e in range(inc_ptr[j], inc_ptr[j + 1]):
                r = inc_pot[e]
                if pot_mark[r] != b + 1:
                    pot_mark[r] = b + 1
                    pots[n_pots] = r
                    n_pots += 1
        e_cur = _local_energy(y, pots, n_pots, pot_ptr, term_rv, term_coef, pot_const, pot_weight, pot_power)
        for i in range(n_changed):
            j = changed[i]
            old[i] = y[j]
            y[j] = prop[j]
        e_prop = _local_energy(y, pots, n_pots, pot_ptr, term_rv, term_coef, pot_const, pot_weight, pot_power)
        log_alpha = e_cur - e_prop
        if hastings:
            log_alpha += log_rev - log_fwd
        if log_alpha >= 0.0 or u_acc < np.exp(log_alpha):
            accepts[b] += 1
        else:
            for i in range(n_changed):
                y[changed[i]] = old[i]
        for i in range(n_pots):
            pot_mark[pots[i]] = 0
    return pos
