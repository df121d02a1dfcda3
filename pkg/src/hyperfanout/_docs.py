from __future__ import annotations

from textwrap import dedent
from typing import Any, Callable, TypeVar

T = TypeVar("T")


def inject_docs(**kwargs: Any) -> Callable[[T], T]:  # noqa: D103
    # taken from scanpy
    def decorator(obj: T) -> T:
        if obj.__doc__ is not None:
            obj.__doc__ = dedent(obj.__doc__).format(**kwargs)
        return obj

    return decorator
