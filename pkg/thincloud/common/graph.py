'''Directed graph and associated algorithms.'''

from collections import (defaultdict, deque)
from .exception import ThinCloudException


class DirectedGraph:
    '''Directed graph represented by adjacent list.'''

    def __init__(self) -> None:
        #  initialize empty adjacency map: node -> [node1, node2, ...]
        self.__adjacency = defaultdict(list)
        # empty in degrees: node -> int
        self.__in_degrees = defaultdict(int)


    def __str__(self) -> str:
        '''Show adjacent list of graph.'''
        items = [f'{node}: {",".join(map(str, node_list))}' \
                 for node, node_list in self.__adjacency.items()]
        return '\n'.join(items)


    def __len__(self) -> int:
        return len(self.__in_degrees)


    def __contains__(self, node) -> bool:
        return node in self.__in_degrees


    def add_node(self, node):
        '''Add a node without any edge, e.g. an op consuming leaves only.'''
        if node not in self.__in_degrees:
            self.__in_degrees[node] = 0
        if node not in self.__adjacency:
            self.__adjacency[node] = []


    def add_edge(self, node_from, node_to):
        '''Add a directed edge from `node_from` to `node_to`.

        Args:
            node_from: Start node in user defined type.
            node_to: End node in user defined type.
        '''
        self.add_node(node_from)
        self.add_node(node_to)
        self.__adjacency[node_from].append(node_to)
        self.__in_degrees[node_to] += 1


    def successors(self, node) -> list:
        '''Nodes directly reachable from `node`.'''
        return list(self.__adjacency.get(node, []))


    def sort(self) -> list:
        '''Sort nodes in topological order. Ties keep insertion order, so the result is
        deterministic for a deterministic construction order.'''
        res = []

        # collect nodes with zero in degree
        q = deque()
        in_degrees = {}
        for node, degree in self.__in_degrees.items():
            in_degrees[node] = degree # copy in degrees
            if degree==0:
                q.append(node)
        if not q: return [] # no valid topological order

        # bfs
        while q:
            node = q.popleft()
            res.append(node)

            for adj_node in self.__adjacency[node]:
                in_degrees[adj_node] -= 1
                if in_degrees[adj_node]==0: q.append(adj_node)

        # the in-degree of all nodes must be zero if the Topological Sorting is successful
        for in_degree in in_degrees.values():
            if in_degree!=0: return []
        return res


    def ancestors(self, node_to) -> set:
        '''All nodes with a path to `node_to`, including itself.

        Args:
            node_to: End node.
        '''
        if node_to not in self.__in_degrees:
            raise ThinCloudException('Node not exist in current graph.')

        # reverse adjacency
        parents = defaultdict(list)
        for node, node_list in self.__adjacency.items():
            for adj_node in node_list: parents[adj_node].append(node)

        res = {node_to}
        q = deque([node_to])
        while q:
            node = q.popleft()
            for parent in parents[node]:
                if parent in res: continue
                res.add(parent)
                q.append(parent)
        return res
