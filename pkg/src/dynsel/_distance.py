import numpy as np

# max number of float cells materialised per distance chunk
_CHUNK_CELLS = 4_000_000


def pairwise_euclidean(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Exact Euclidean distances between rows of ``A`` and rows of ``B``.

    Computed from explicit differences rather than the Gram expansion so that
    equal distances come out bit-identical and index tie-breaks are stable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _CHUNK_CELLS // max(1, B.shape[0] * B.shape[1]))
    for s in range(0, A.shape[0], step):
        diff = A[s:s + step, None, :] - B[None, :, :]
        out[s:s + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def nearest(D: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` smallest entries per row; ties to lower index."""
    return np.argsort(D, axis=1, kind="stable")[:, :k]
