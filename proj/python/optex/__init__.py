"""Python access to the optex C++ core.

Everything of substance lives in the compiled ``optex._core`` module; this
package re-exports it and adds a couple of conveniences.
"""

from ._core import (  # noqa: F401
    CellModel,
    CellParameters,
    ConfigError,
    DomainError,
    EnvConfig,
    OedEnv,
    Param,
    PolicyWeights,
    SingularityError,
    UsageError,
    cc_discharge,
    cli,
    estimate,
    fisher_information,
    rollout,
    run_nmpc,
    sensitivity,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def main(argv=None):
    """Console entry point mirroring the native ``optex`` executable."""
    import sys

    code, out, err = cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
