from typing import Any, Callable, Dict, List, Mapping, Sequence, TypeVar

import os

import ray

from price_intervals import _logger as log
from price_intervals.errors import DataFormatError

T = TypeVar("T")

RECORD_VERSION = 1


@ray.remote
class RayExecutor:
    """A class to execute any arbitrary function remotely."""

    def set_env_var(self, key: str, value: str):
        """Set an environment variable with the provided values."""
        os.environ[key] = value

    def execute(self, fn: Callable, *args, **kwargs):
        """Execute the provided function and return the result."""
        return fn(*args, **kwargs)


def process_results(futures: List[ray.ObjectRef]) -> List[Any]:
    """Wait on all futures and return their results in submission order."""
    not_ready = futures
    while not_ready:
        ready, not_ready = ray.wait(not_ready, timeout=1.0)
        # Surface remote exceptions as soon as they happen.
        ray.get(ready)
    return ray.get(futures)


def run_parallel(fns: Sequence[Callable[[], T]],
                 num_workers: int = 1,
                 num_cpus_per_worker: int = 1) -> List[T]:
    """Runs zero-argument callables, optionally on Ray actors.

    Results are always returned in the order of ``fns``, never in order of
    completion. With ``num_workers <= 1`` everything runs in-process and Ray
    is not touched.

    Args:
        fns (list): Picklable zero-argument callables.
        num_workers (int): Number of Ray actors to spread the calls over.
        num_cpus_per_worker (int): Number of CPUs reserved by each actor.
    """
    if num_workers <= 1 or len(fns) <= 1:
        return [fn() for fn in fns]

    started_here = False
    if not ray.is_initialized():
        ray.init(num_cpus=num_workers * num_cpus_per_worker)
        started_here = True

    num_actors = min(num_workers, len(fns))
    workers = [
        RayExecutor.options(num_cpus=num_cpus_per_worker).remote()
        for _ in range(num_actors)
    ]
    if "PL_GLOBAL_SEED" in os.environ:
        seed = os.environ["PL_GLOBAL_SEED"]
        ray.get(
            [w.set_env_var.remote("PL_GLOBAL_SEED", seed) for w in workers])
    log.info(f"running {len(fns)} tasks on {num_actors} Ray actors")
    try:
        futures = [
            workers[i % num_actors].execute.remote(fn)
            for i, fn in enumerate(fns)
        ]
        return process_results(futures)
    finally:
        for w in workers:
            ray.kill(w, no_restart=True)
        if started_here:
            ray.shutdown()


def write_record(path: str, kind: str, values: Mapping[str, Any]) -> None:
    """Writes a flat ``name = value`` record.

    Floats are written with ``repr`` so they re-parse bit-identically.
    """
    lines = [f"kind = {kind}", f"version = {RECORD_VERSION}"]
    for key, value in values.items():
        if isinstance(value, float):
            value = repr(float(value))
        lines.append(f"{key} = {value}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_record(path: str, kind: str) -> Dict[str, str]:
    """Reads a record written by :func:`write_record`.

    Values are returned as strings; typing them is up to the caller.
    """
    values = {}
    with open(path) as f:
        for number, line in enumerate(f):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"expected 'name = value', got {line!r}",
                                      number + 1)
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    if values.pop("kind", None) != kind:
        raise DataFormatError(f"{path} is not a {kind} record")
    version = int(values.pop("version", -1))
    if version != RECORD_VERSION:
        raise DataFormatError(f"unsupported record version {version} in "
                              f"{path}, expected {RECORD_VERSION}")
    return values
