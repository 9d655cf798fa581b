"""Reference game managers, runnable as standalone HTTP services."""
