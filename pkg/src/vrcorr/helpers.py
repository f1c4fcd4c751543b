from typing import Any, Callable, Iterable, Sequence, TypeVar
from textwrap import dedent
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import orjson
import msgspec

from rich.console import Console
from alive_progress import alive_bar

console = Console()

T = TypeVar('T')
R = TypeVar('R')

def log(func: Callable) -> Callable:
    """Log any arguments passed to a function when an exception arises."""

    ERROR_MESSAGE = """
    Function: {func.__name__}
    Error message: {e}
    Arguments: {args}
    Keyword arguments: {kwargs}
    """
    ERROR_MESSAGE = dedent(ERROR_MESSAGE)

    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)

        except Exception as e:
            warning(ERROR_MESSAGE.format(
                func=func,
                e=e,
                args=args,
                kwargs=kwargs,
            ))

            raise e

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    wrapper.__wrapped__ = func

    return wrapper

def save_json(path: str, content: Any, encoder: Callable[[Any], bytes] = msgspec.json.encode) -> None:
    """Save content as a json file."""

    with open(path, 'wb') as writer:
        writer.write(encoder(content))

def load_json(path: str, decoder: Callable[[bytes], Any] = orjson.loads) -> Any:
    """Load a json file."""

    with open(path, 'rb') as reader:
        return decoder(reader.read())

def make_rng(*key: int) -> np.random.Generator:
    """Create a random number generator from an integer key sequence such as `(seed, replication, stream)`.

    Distinct keys yield independent streams, so the draws made by one part of a replication never depend on how many draws another part has made."""

    return np.random.default_rng([int(k) for k in key])

def alive_map(func: Callable[[T], R], items: Sequence[T], executor: ThreadPoolExecutor | None = None, show_progress: bool = True) -> list[R]:
    """`map` over a thread pool with a progress bar from `alive_progress`, preserving the order of the results."""

    # Initialise the progress bar.
    with alive_bar(len(items), disable=not show_progress) as bar:
        # Create a wrapper function to update the progress bar.
        def wrapper(item):
            # Wait for the result.
            res = func(item)

            # Update the progress bar.
            bar()

            return res

        # Run sequentially if there is no executor.
        if executor is None:
            return [wrapper(item) for item in items]

        # NOTE `Executor.map` yields results in submission order regardless of completion order, which keeps outputs deterministic.
        return list(executor.map(wrapper, items))

def warning(message: str) -> None:
    """Log a warning message."""

    console.print(f'\n:warning-emoji:  {message}', style='orange1 bold', emoji=True, soft_wrap=True)

def trailing_mean(values: Iterable[float], window: int) -> np.ndarray:
    """Compute the mean of each value and up to `window - 1` values preceding it."""

    values = np.asarray(list(values), dtype=float)

    if not len(values):
        return values

    cumsum = np.cumsum(np.insert(values, 0, 0.0))
    counts = np.minimum(np.arange(1, len(values) + 1), window)
    starts = np.arange(1, len(values) + 1) - counts

    return (cumsum[1:] - cumsum[starts]) / counts
