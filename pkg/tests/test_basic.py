import hyperfanout


def test_package_has_version() -> None:
    assert isinstance(hyperfanout.__version__, str)


def test_public_api_is_importable() -> None:
    missing = [name for name in hyperfanout.__all__ if not hasattr(hyperfanout, name)]
    assert missing == []
