from ._asyncio import cancel_tasks, run, run_concurrently, run_in_threads
from ._canonical import digest, dumps
from ._parser import parse_angle

try:
    from tomllib import loads as toml_loads
except ModuleNotFoundError:
    from tomli import loads as toml_loads
