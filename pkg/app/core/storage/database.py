# app/core/storage/database.py
"""求解缓存的 SQLite 连接：同一文件的引擎在进程内共享，写会话串行"""

import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, NamedTuple

from sqlalchemy import create_engine, event
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from app.core.utils.logger import setup_logger

from .constants import CACHE_CONFIG
from .models import Base

logger = setup_logger("cache_db")


class _Connection(NamedTuple):
    engine: Engine
    sessions: sessionmaker
    write_lock: Any  # threading.RLock


_connections: Dict[Path, _Connection] = {}
_connections_lock = threading.Lock()


def _set_sqlite_pragma(dbapi_connection, _connection_record):
    # compare 在线程池中并行规划，WAL 允许读写并发
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA journal_mode=WAL")
    cursor.execute("PRAGMA busy_timeout=30000")
    cursor.close()


def _connect(db_path: Path) -> _Connection:
    with _connections_lock:
        connection = _connections.get(db_path)
        if connection is None:
            db_path.parent.mkdir(parents=True, exist_ok=True)
            engine = create_engine(
                f"sqlite:///{db_path}",
                connect_args={"check_same_thread": False, "timeout": 30},
            )
            event.listen(engine, "connect", _set_sqlite_pragma)
            Base.metadata.create_all(engine)
            connection = _Connection(
                engine, sessionmaker(bind=engine, expire_on_commit=False), threading.RLock()
            )
            _connections[db_path] = connection
            logger.debug(f"solution cache opened at {db_path}")
        return connection


class DatabaseManager:
    """缓存目录下的求解缓存数据库"""

    def __init__(self, cache_dir: str):
        self.db_path = Path(cache_dir) / CACHE_CONFIG["db_filename"]
        try:
            self._connection = _connect(self.db_path)
        except Exception as e:
            logger.error(f"Failed to open solution cache {self.db_path}: {e}")
            raise

    @contextmanager
    def get_session(self, write: bool = False) -> Iterator[Session]:
        """会话正常结束时提交、异常时回滚；write=True 时持有该文件的写锁"""
        if self._connection is None:
            self._connection = _connect(self.db_path)
        connection = self._connection
        if write:
            connection.write_lock.acquire()
        session = connection.sessions()
        try:
            yield session
            session.commit()
        except Exception as e:
            session.rollback()
            logger.error(f"Solution cache session error: {e}")
            raise
        finally:
            session.close()
            if write:
                connection.write_lock.release()

    def close(self):
        """释放引擎；之后再取会话会重新连接"""
        with _connections_lock:
            connection = _connections.pop(self.db_path, None)
        if connection is not None:
            connection.engine.dispose()
        self._connection = None
