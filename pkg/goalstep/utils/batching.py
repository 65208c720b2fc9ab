def get_batch_size(L: int) -> int:
    """
    Compute the process-pool chunk size for a given number of tasks.
    
    Parameters
    ----------
    L : int
        The number of tasks.
    
    Returns
    -------
    int
        The chunk size.
    """
    
    return max(1, L // 100)
