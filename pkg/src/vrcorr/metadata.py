from importlib.metadata import version, PackageNotFoundError

OUTPUT_VERSIONS: dict[str, int] = {
    'sweep' : 1,
    'convergence' : 1,
    'runs' : 1,
    'slots' : 1,
    'ne_check' : 1,
    'manifest' : 1,
}
"""A map of the names of output files to schema version numbers. This flags whether outputs written by different versions of the simulator can be compared column for column.

Semantic versioning is *not* used here as the sole purpose of these version numbers is to indicate absolute schema compatibility."""

try:
    TOOL_VERSION: str = version('vrcorr')
    """The installed version of the simulator, recorded in output manifests."""

except PackageNotFoundError:
    # NOTE This happens when the package is imported from a source checkout without being installed.
    TOOL_VERSION: str = '0+local'
