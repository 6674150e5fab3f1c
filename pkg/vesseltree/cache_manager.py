import json
import hashlib
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass
from threading import Lock
from typing import Any, Optional

# Diretório dos resultados de execuções (usado pela API), na raiz do projeto
CACHE_DIR = os.environ.get('VESSELTREE_CACHE_DIR', os.path.join(os.path.dirname(__file__), '..', '.cache'))


def config_digest(data: Any) -> str:
    """
    SHA-256 da representação JSON canônica (chaves ordenadas) de uma configuração.
    """
    params_str = json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(params_str.encode('utf-8')).hexdigest()


def _cache_file(cache_key: str) -> str:
    return os.path.join(CACHE_DIR, f"{cache_key}.json")


def save_to_cache(cache_key: str, data: Any):
    """Salva um relatório de execução no cache em disco."""
    os.makedirs(CACHE_DIR, exist_ok=True)
    cache_file = _cache_file(cache_key)
    try:
        with open(cache_file, 'w') as f:
            json.dump(data, f, indent=2, sort_keys=True)
        logging.info(f"Run report cached: {cache_file}")
    except OSError as e:
        logging.error(f"Could not write cache file {cache_file}: {e}")


def load_from_cache(cache_key: str) -> Optional[Any]:
    cache_file = _cache_file(cache_key)
    if not os.path.exists(cache_file):
        return None
    try:
        with open(cache_file, 'r') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logging.error(f"Could not read cache file {cache_file}: {e}")
        return None


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0


class DistanceMapCache:
    """
    Cache em memória, limitado e thread-safe, de mapas de distância indexados pelo nó semente.
    Acima de `max_entries`, o mais antigo é descartado.
    """

    def __init__(self, max_entries=16):
        self.max_entries = max(0, int(max_entries))
        self.entries = OrderedDict()
        self.stats = CacheStats()
        self.lock = Lock()

    def get(self, node: int):
        with self.lock:
            if node not in self.entries:
                self.stats.misses += 1
                return None
            self.stats.hits += 1
            return self.entries[node]

    def set(self, node: int, distance_map):
        if self.max_entries == 0:
            return
        with self.lock:
            self.entries[node] = distance_map
            self.entries.move_to_end(node)
            while len(self.entries) > self.max_entries:
                evicted, _ = self.entries.popitem(last=False)
                self.stats.evictions += 1
                logging.debug(f"Distance map of node {evicted} evicted from cache.")

    def __contains__(self, node):
        with self.lock:
            return node in self.entries

    def __len__(self):
        with self.lock:
            return len(self.entries)
