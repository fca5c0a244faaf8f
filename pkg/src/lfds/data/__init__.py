from .benchmark import parse_benchmark_dataset, write_benchmark_dataset
from .cache import load_dataset, save_dataset
from .embedding import embed_dataset, embed_nodes, walk_length
from .folds import FoldSplit, make_folds
from .graph import Dataset, GraphBatch, GraphSample
from .synthetic import generate_pc_graphs, generate_separable, knn_graph

__all__ = [
    "Dataset",
    "FoldSplit",
    "GraphBatch",
    "GraphSample",
    "embed_dataset",
    "embed_nodes",
    "generate_pc_graphs",
    "generate_separable",
    "knn_graph",
    "load_dataset",
    "make_folds",
    "parse_benchmark_dataset",
    "save_dataset",
    "walk_length",
    "write_benchmark_dataset",
]
