from __future__ import annotations

from dataclasses import dataclass, replace
from os import getenv
from typing import Any, Final, Literal

EpsPolicyName = Literal["richardson", "fixed"]

DEFAULT_N_LIST: Final[tuple[int, ...]] = (16, 32, 64, 128, 256)


@dataclass(frozen=True)
class Settings:
    grid_lo: float = -4.0
    grid_hi: float = 4.0
    grid_points: int = 2001
    n_list: tuple[int, ...] = DEFAULT_N_LIST
    eps: float = 1e-5
    eps_policy: EpsPolicyName = "richardson"
    tol: float = 1e-12
    max_iter: int = 10_000
    window_constant: float = 1.0
    cauchy_height: float = 1e4
    threads: int = 1


def load_env() -> None:
    try:
        from dotenv import load_dotenv  # type: ignore

        load_dotenv()
    except Exception:
        return


def _env_number(name: str, cast: type, *, minimum: float | None = None) -> Any:
    raw = getenv(name)
    if raw is None or not raw.strip():
        return None
    try:
        value = cast(raw.strip())
    except ValueError as e:
        raise RuntimeError(f"Invalid {name}: {raw!r}") from e
    if minimum is not None and value < minimum:
        raise RuntimeError(f"Invalid {name}: must be >= {minimum}, got {raw!r}")
    return value


def get_thread_cap() -> int | None:
    load_env()
    return _env_number("FREECLT_THREADS", int, minimum=1)


def get_log_dir() -> str | None:
    load_env()
    value = getenv("FREECLT_LOG_DIR")
    return value.strip() if value and value.strip() else None


def get_log_level() -> str | None:
    load_env()
    value = getenv("FREECLT_LOG_LEVEL")
    return value.strip().upper() if value and value.strip() else None


def load_settings(base: Settings | None = None) -> Settings:
    """Return settings with ``FREECLT_*`` environment overrides applied.

    Args:
        base: Settings to start from. Defaults to ``Settings()``.

    Returns:
        A new frozen ``Settings`` instance.

    Raises:
        RuntimeError: If an environment variable is set but cannot be parsed or is out of range.
    """
    load_env()
    settings = base or Settings()
    overrides: dict[str, Any] = {}

    threads = get_thread_cap()
    if threads is not None:
        overrides["threads"] = threads

    eps = _env_number("FREECLT_EPS", float)
    if eps is not None:
        if eps <= 0:
            raise RuntimeError(f"Invalid FREECLT_EPS: must be > 0, got {eps!r}")
        overrides["eps"] = eps

    tol = _env_number("FREECLT_TOL", float)
    if tol is not None:
        if tol <= 0:
            raise RuntimeError(f"Invalid FREECLT_TOL: must be > 0, got {tol!r}")
        overrides["tol"] = tol

    max_iter = _env_number("FREECLT_MAX_ITER", int, minimum=1)
    if max_iter is not None:
        overrides["max_iter"] = max_iter

    window_constant = _env_number("FREECLT_WINDOW_CONSTANT", float, minimum=0.0)
    if window_constant is not None:
        overrides["window_constant"] = window_constant

    return replace(settings, **overrides) if overrides else settings


def settings_summary(settings: Settings) -> dict[str, Any]:
    return {
        "grid": f"{settings.grid_lo}:{settings.grid_hi}:{settings.grid_points}",
        "n_list": list(settings.n_list),
        "eps": settings.eps,
        "eps_policy": settings.eps_policy,
        "tol": settings.tol,
        "max_iter": settings.max_iter,
        "threads": settings.threads,
    }
