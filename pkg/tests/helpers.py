"""Dense (non-symmetric) reference implementations used as test oracles."""

import numpy as np

from kmps.graded import BlockTensor, to_dense


def dense_contract(t1: BlockTensor, t2: BlockTensor, pairs):
    """Plain np.tensordot on the dense embeddings."""
    a = to_dense(t1)
    b = to_dense(t2)
    axes1 = [i for i, _ in pairs]
    axes2 = [j for _, j in pairs]
    return np.tensordot(a, b, axes=(axes1, axes2))


def dense_svd_spectrum(t: BlockTensor, left_axes):
    """Singular values of the dense matricization across the split."""
    a = to_dense(t)
    left_axes = tuple(left_axes)
    right_axes = tuple(i for i in range(a.ndim) if i not in left_axes)
    m = np.transpose(a, left_axes + right_axes)
    rows = int(np.prod([a.shape[i] for i in left_axes]))
    return np.linalg.svd(m.reshape(rows, -1), compute_uv=False)


def reconstruct_split(u, s, v):
    """Contract U*S*V back together (bond is the last/first axis)."""
    from kmps.graded import contract
    us = contract(u, s, [(u.ndim - 1, 0)])
    return contract(us, v, [(us.ndim - 1, 0)])


def mpo_dense_naive(op):
    """Fully dense MPO chain contraction; tiny layouts only.

    Row/column slot ordering matches the graded dense embedding of the
    per-site physical spaces (sorted-charge order).
    """
    res = to_dense(op.tensors[0])            # (1, r, c, D)
    for t in op.tensors[1:]:
        res = np.tensordot(res, to_dense(t), axes=([res.ndim - 1], [0]))
    res = res[0, ..., 0]
    n = res.ndim // 2
    perm = tuple(range(0, 2 * n, 2)) + tuple(range(1, 2 * n, 2))
    res = np.transpose(res, perm)
    rows = int(np.prod(res.shape[:n]))
    return res.reshape(rows, -1)
