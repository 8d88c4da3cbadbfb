import asyncio
import concurrent.futures
import logging
import signal
import threading

logger = logging.getLogger(__name__)


def run(coro, debug=False):
    """Run `coro` in a new event loop and return its result.

    SIGHUP, SIGINT and SIGTERM cancel the task, if called from the main
    thread. A cancelled run returns None.
    """

    def signal_handler(task):
        task.cancel()

    loop = asyncio.new_event_loop()
    asyncio.set_event_loop(loop)
    try:
        if debug is not None:
            loop.set_debug(debug)

        task = loop.create_task(coro)
        if threading.current_thread() is threading.main_thread():
            for signame in ["SIGHUP", "SIGINT", "SIGTERM"]:
                if hasattr(signal, signame):
                    loop.add_signal_handler(
                        getattr(signal, signame), signal_handler, task
                    )

        return loop.run_until_complete(task)
    except asyncio.CancelledError:
        return None
    finally:
        loop.run_until_complete(loop.shutdown_asyncgens())
        if hasattr(loop, "shutdown_default_executor"):
            loop.run_until_complete(loop.shutdown_default_executor())
        asyncio.set_event_loop(None)
        loop.close()


async def run_concurrently(*aws):
    """Run awaitables concurrently and cancel others on error.

    Like `asyncio.gather()`, but if one task raises an exception, all other
    tasks are canceled.
    """

    tasks = [asyncio.ensure_future(aw) for aw in aws]
    try:
        return await asyncio.gather(*tasks)
    finally:
        await cancel_tasks(tasks)


async def run_in_threads(funcs, max_workers=None):
    """Call the blocking `funcs` on a thread pool.

    The results are returned in the order of `funcs`, independent of the
    order in which the workers finish. If one call fails, calls that didn't
    start, yet, are canceled and the error is raised.
    """

    loop = asyncio.get_running_loop()
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [loop.run_in_executor(executor, func) for func in funcs]
        return await run_concurrently(*futures)


async def cancel_tasks(tasks):
    """Cancel tasks and wait until all are canceled"""

    for task in tasks:
        if not task.done():
            task.cancel()

    results = await asyncio.gather(*tasks, return_exceptions=True)
    for result in results:
        if isinstance(result, Exception):
            logger.warning("Ignoring error in canceled task: %s", result)
