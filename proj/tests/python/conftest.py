import pytest

pytest.importorskip("invagg._core", reason="install the package first: pip install -e . --no-build-isolation")
