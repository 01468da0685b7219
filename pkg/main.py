#!/usr/bin/env python3
"""
GSN随机场工具主程序
"""
import json
import logging
import sys

from src import __version__
from src.errors import ConfigError, CurvePointError, DomainViolation, GsnError
from src.parser import parse_config
from src.runner import run


def error_record(exc: Exception, command: str = "") -> str:
    """机器可读的错误记录（单行JSON）"""
    record = {"error": type(exc).__name__, "message": str(exc), "command": command}
    if isinstance(exc, DomainViolation):
        record.update({"key": exc.key, "value": str(exc.value), "allowed": exc.allowed})
    if isinstance(exc, CurvePointError):
        record["u"] = exc.u
    return json.dumps(record, ensure_ascii=False)


def main(argv=None) -> int:
    """主函数，返回退出码"""
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(error_record(exc), file=sys.stderr)
        return 2

    logging.basicConfig(
        level=logging.INFO if config.get("verbose") else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    print("=" * 60)
    print(f"GSN随机场工具 {__version__}")
    print("=" * 60)
    print(f"命令: {config.command}")
    print(f"随机种子: {config.seed}")
    print(f"输出目录: {config.output_dir}")
    print()

    try:
        code = run(config)
    except ConfigError as exc:
        print(error_record(exc, config.command), file=sys.stderr)
        return 2
    except (GsnError, OSError) as exc:
        print(error_record(exc, config.command), file=sys.stderr)
        return 1

    print("\n" + "=" * 60)
    print("完成！" if code == 0 else "存在失败项")
    print("=" * 60)
    return code


if __name__ == '__main__':
    sys.exit(main())
