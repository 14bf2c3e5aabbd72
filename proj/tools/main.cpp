// placeholder until the command surface lands
int main() { return 0; }
