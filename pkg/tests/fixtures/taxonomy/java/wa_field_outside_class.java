@Entity
@Table(name = "users")
private String name;
