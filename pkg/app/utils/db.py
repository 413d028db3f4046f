import hashlib
import threading
from datetime import datetime
from typing import Dict, List, Optional

METRIC_NAMES = (
    "total_graphs",
    "total_runs",
    "total_monte_carlo",
    "total_sweeps",
    "total_checks",
)


class ExperimentStore:
    """Simple in-memory storage for uploaded graphs and experiment results"""

    def __init__(self):
        self._lock = threading.Lock()
        self.graphs: Dict[str, dict] = {}
        self.results: Dict[str, dict] = {}
        self.metrics = {name: 0 for name in METRIC_NAMES}

    @staticmethod
    def generate_graph_id(name: str, text: str) -> str:
        """Stable id from the file name and its content"""
        return hashlib.md5(f"{name}_{text}".encode()).hexdigest()[:16]

    def store_graph(self, name: str, text: str, graph) -> str:
        graph_id = self.generate_graph_id(name, text)
        with self._lock:
            if graph_id not in self.graphs:
                self.metrics["total_graphs"] += 1
            self.graphs[graph_id] = {
                "id": graph_id,
                "name": name,
                "text": text,
                "graph": graph,
                "uploaded_at": datetime.now().isoformat(),
            }
        return graph_id

    def get_graph(self, graph_id: str) -> Optional[dict]:
        return self.graphs.get(graph_id)

    def graph_exists(self, graph_id: str) -> bool:
        return graph_id in self.graphs

    def get_all_graphs(self) -> List[dict]:
        return list(self.graphs.values())

    def store_result(self, graph_id: str, kind: str, payload: dict) -> str:
        with self._lock:
            result_id = f"{kind}-{len(self.results) + 1}"
            self.results[result_id] = {
                "id": result_id,
                "graph_id": graph_id,
                "kind": kind,
                "payload": payload,
                "created_at": datetime.now().isoformat(),
            }
        return result_id

    def get_result(self, result_id: str) -> Optional[dict]:
        return self.results.get(result_id)

    def get_metrics(self) -> dict:
        return {
            **self.metrics,
            "stored_graphs": len(self.graphs),
            "stored_results": len(self.results),
        }

    def increment_metric(self, metric_name: str):
        with self._lock:
            if metric_name in self.metrics:
                self.metrics[metric_name] += 1

    def reset(self):
        with self._lock:
            self.graphs.clear()
            self.results.clear()
            self.metrics = {name: 0 for name in METRIC_NAMES}


db = ExperimentStore()
