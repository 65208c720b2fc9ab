from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import expm


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    Nonnegative weights defining the seminorm |x|_w = sum_i w_i |x_i|.
    """
    
    w: NDArray
    
    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if np.any(w < 0):
            raise ValueError('[GOALSTEP] Seminorm weights must be nonnegative.')
        if not np.any(w > 0):
            raise ValueError('[GOALSTEP] At least one seminorm weight must be positive.')
        object.__setattr__(self, 'w', w)
    
    @property
    def image(self) -> NDArray:
        """
        Mask of the components the seminorm sees.
        """
        
        return self.w > 0


def _weights(w: WeightVector | NDArray) -> NDArray:
    return w.w if isinstance(w, WeightVector) else WeightVector(w).w


def seminorm(x: NDArray, w: WeightVector | NDArray) -> float:
    """
    Weighted seminorm sum_i w_i |x_i|.
    
    Raises
    ------
    ValueError
        If the dimensions do not match.
    """
    
    w = _weights(w)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != w.shape:
        raise ValueError(f'[GOALSTEP] State of shape {x.shape} does not match weights of shape {w.shape}.')
    
    return float(w @ np.abs(x))


def lipschitz_seminorm(A: NDArray, w: WeightVector | NDArray) -> float:
    """
    Lipschitz-seminorm of a linear map with respect to |.|_w on the output and |.|_1 on the input,
    max_j sum_i w_i |a_ij|.
    
    Parameters
    ----------
    A : NDArray
        An n x m matrix.
    w : WeightVector | NDArray
        Weights of length n.
    
    Returns
    -------
    float
        The weighted column-max seminorm.
    
    Raises
    ------
    ValueError
        If the dimensions do not match.
    """
    
    w = _weights(w)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != w.size:
        raise ValueError(f'[GOALSTEP] Matrix with {A.shape[0]} rows does not match weights of length {w.size}.')
    
    return float(np.max(w @ np.abs(A)))


@dataclass(frozen=True)
class FlowMapTransport:
    """
    Block decomposition of the exact flow map exp(A dt) along the image and the nullspace of a seminorm. All entries
    are induced 1-norms of the respective blocks.
    
    Parameters
    ----------
    damping_image : float
        Image to image.
    damping_null : float
        Nullspace to nullspace.
    transport_null_to_image : float
        Nullspace to image. Errors committed in the nullspace reach the QoI through this block.
    transport_image_to_null : float
        Image to nullspace.
    lipschitz : float
        Lipschitz-seminorm of the full flow map.
    """
    
    damping_image: float
    damping_null: float
    transport_null_to_image: float
    transport_image_to_null: float
    lipschitz: float


def _block_norm(block: NDArray) -> float:
    if block.size == 0:
        return 0.
    return float(np.linalg.norm(block, 1))


def flow_map_transport(A: NDArray, w: WeightVector | NDArray, dt: float = 1.) -> FlowMapTransport:
    """
    Decompose the flow map M = exp(A dt) of u' = A u into damping and transport between the components a seminorm
    sees and those in its nullspace.
    
    Parameters
    ----------
    A : NDArray
        The system matrix.
    w : WeightVector | NDArray
        The seminorm weights.
    dt : float, optional
        The flow time, by default 1.
    
    Returns
    -------
    FlowMapTransport
        The block norms.
    """
    
    weights = w if isinstance(w, WeightVector) else WeightVector(w)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (weights.w.size, weights.w.size):
        raise ValueError(f'[GOALSTEP] Matrix of shape {A.shape} does not match weights of length {weights.w.size}.')
    
    M = expm(A * dt)
    image = weights.image
    null = ~image
    
    return FlowMapTransport(
        damping_image=_block_norm(M[np.ix_(image, image)]),
        damping_null=_block_norm(M[np.ix_(null, null)]),
        transport_null_to_image=_block_norm(M[np.ix_(image, null)]),
        transport_image_to_null=_block_norm(M[np.ix_(null, image)]),
        lipschitz=lipschitz_seminorm(M, weights),
        )
